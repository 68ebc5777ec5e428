#include "mfjm/mfpc.hpp"

#include <cmath>
#include <string>

#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::fpca {

void MfpcBasis::validate() const {
    if (grid.size() < 2) throw ConfigError("MfpcBasis: grid too small");
    if (weights.size() != num_markers()) throw ConfigError("MfpcBasis: weight count mismatch");
    if ((weights.array() <= 0.0).any()) throw ConfigError("MfpcBasis: weights must be positive");
    for (const auto& ef : eigenfunctions) {
        if (ef.rows() != grid.size() || ef.cols() != total_components())
            throw ConfigError("MfpcBasis: eigenfunction matrix shape mismatch");
    }
    for (int m = 1; m < total_components(); ++m)
        if (eigenvalues(m) > eigenvalues(m - 1) + 1e-12)
            throw ConfigError("MfpcBasis: eigenvalues not nonincreasing");
    if (truncation < 0 || truncation > total_components())
        throw ConfigError("MfpcBasis: invalid truncation");
}

double MfpcBasis::eval(int marker, int component, double t) const {
    return interp_linear(grid, eigenfunctions[marker].col(component), t);
}

Eigen::RowVectorXd MfpcBasis::eval_row(int marker, double t) const {
    Eigen::RowVectorXd out(truncation);
    for (int m = 0; m < truncation; ++m) out(m) = eval(marker, m, t);
    return out;
}

double scalar_product(const MfpcBasis& basis, const std::vector<Eigen::VectorXd>& f,
                      const std::vector<Eigen::VectorXd>& g) {
    if (static_cast<int>(f.size()) != basis.num_markers() || f.size() != g.size())
        throw SchemaError("scalar_product: marker count mismatch");
    const Eigen::VectorXd w = trapezoid_weights(basis.grid);
    double total = 0.0;
    for (int k = 0; k < basis.num_markers(); ++k) {
        if (f[k].size() != basis.grid.size() || g[k].size() != basis.grid.size())
            throw SchemaError("scalar_product: grid length mismatch");
        total += basis.weights(k) * (w.array() * f[k].array() * g[k].array()).sum();
    }
    return total;
}

double component_scalar_product(const MfpcBasis& basis, int m1, int m2) {
    const Eigen::VectorXd w = trapezoid_weights(basis.grid);
    double total = 0.0;
    for (int k = 0; k < basis.num_markers(); ++k)
        total += basis.weights(k) * (w.array() * basis.eigenfunctions[k].col(m1).array() *
                                     basis.eigenfunctions[k].col(m2).array())
                                        .sum();
    return total;
}

MfpcBasis build_kl_eigenbasis(const std::vector<Eigen::MatrixXd>& basis_on_grid,
                              const Eigen::MatrixXd& coef_cov, const Eigen::VectorXd& grid,
                              const Eigen::VectorXd& weights) {
    const int k_count = static_cast<int>(basis_on_grid.size());
    if (k_count == 0) throw ConfigError("build_kl_eigenbasis: no markers");
    Eigen::VectorXd w_k = weights.size() ? weights : Eigen::VectorXd::Ones(k_count);
    if (w_k.size() != k_count) throw ConfigError("build_kl_eigenbasis: weight count mismatch");

    int total_dim = 0;
    for (const auto& b : basis_on_grid) {
        if (b.rows() != grid.size())
            throw ConfigError("build_kl_eigenbasis: basis grid length mismatch");
        total_dim += static_cast<int>(b.cols());
    }
    if (coef_cov.rows() != total_dim || coef_cov.cols() != total_dim)
        throw ConfigError("build_kl_eigenbasis: coefficient covariance dimension mismatch");

    // Blockdiagonal Gram matrix of the weighted scalar products of the basis
    // functions, trapezoidal quadrature on the grid.
    const Eigen::VectorXd tw = trapezoid_weights(grid);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(total_dim, total_dim);
    int offset = 0;
    for (int k = 0; k < k_count; ++k) {
        const auto& b = basis_on_grid[k];
        const int d = static_cast<int>(b.cols());
        gram.block(offset, offset, d, d) =
            w_k(k) * (b.transpose() * tw.asDiagonal() * b);
        offset += d;
    }
    gram = 0.5 * (gram + gram.transpose().eval());

    // Solve the generalized problem through the symmetric form
    // G^{1/2} Q G^{1/2} u = nu u, coefficient vectors a = G^{-1/2} u, which
    // makes a' G a = 1 so the eigenfunctions have unit weighted norm.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(gram);
    if (gram_eig.info() != Eigen::Success)
        throw NumericalError("build_kl_eigenbasis: Gram eigendecomposition failed");
    const Eigen::VectorXd gev = gram_eig.eigenvalues();
    if (gev.minCoeff() <= 1e-12 * gev.maxCoeff())
        throw NumericalError("build_kl_eigenbasis: basis functions numerically dependent");
    const Eigen::MatrixXd gram_half =
        gram_eig.eigenvectors() * gev.array().sqrt().matrix().asDiagonal() *
        gram_eig.eigenvectors().transpose();
    const Eigen::MatrixXd gram_half_inv =
        gram_eig.eigenvectors() * gev.array().rsqrt().matrix().asDiagonal() *
        gram_eig.eigenvectors().transpose();

    Eigen::MatrixXd sym = gram_half * coef_cov * gram_half;
    sym = 0.5 * (sym + sym.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success)
        throw NumericalError("build_kl_eigenbasis: kernel eigendecomposition failed");

    MfpcBasis out;
    out.grid = grid;
    out.weights = w_k;
    out.eigenvalues = Eigen::VectorXd(total_dim);
    out.combination_weights = Eigen::MatrixXd(total_dim, total_dim);
    Eigen::MatrixXd coef(total_dim, total_dim); // column m = coefficient vector a_m
    for (int m = 0; m < total_dim; ++m) {
        const int src = total_dim - 1 - m; // descending eigenvalues
        out.eigenvalues(m) = std::max(0.0, eig.eigenvalues()(src));
        coef.col(m) = gram_half_inv * eig.eigenvectors().col(src);
        out.combination_weights.col(m) = eig.eigenvectors().col(src);
    }

    out.eigenfunctions.resize(k_count);
    offset = 0;
    for (int k = 0; k < k_count; ++k) {
        const auto& b = basis_on_grid[k];
        const int d = static_cast<int>(b.cols());
        out.eigenfunctions[k] = b * coef.middleRows(offset, d);
        offset += d;
    }
    out.truncation = total_dim;
    out.validate();
    return out;
}

} // namespace mfjm::fpca
