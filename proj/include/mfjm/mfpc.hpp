#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mfjm::fpca {

// Grid-evaluated multivariate eigenfunctions with eigenvalues and the
// scalar-product weights they are orthonormal under. Component m of marker k
// is eigenfunctions[k].col(m); truncation M <= M* selects the leading
// components actually used as a random-effect basis.
struct MfpcBasis {
    Eigen::VectorXd grid;
    Eigen::VectorXd weights; // w_k, one per marker
    std::vector<Eigen::MatrixXd> eigenfunctions; // per marker: grid x M*
    Eigen::VectorXd eigenvalues;                 // M*, nonincreasing
    Eigen::MatrixXd combination_weights;         // columns = eigenvectors c_m (may be empty)
    int truncation = 0;

    int num_markers() const { return static_cast<int>(eigenfunctions.size()); }
    int total_components() const { return static_cast<int>(eigenvalues.size()); }
    int num_components() const { return truncation; }

    // Linear interpolation of component m for marker k between grid points.
    double eval(int marker, int component, double t) const;

    // Values of the leading M components of marker k at time t.
    Eigen::RowVectorXd eval_row(int marker, double t) const;

    void validate() const;
};

// Weighted scalar product (sum_k w_k int f_k g_k) of two grid-evaluated
// multivariate functions, trapezoidal quadrature on the basis grid.
double scalar_product(const MfpcBasis& basis, const std::vector<Eigen::VectorXd>& f,
                      const std::vector<Eigen::VectorXd>& g);

// Scalar product of two stored components.
double component_scalar_product(const MfpcBasis& basis, int m1, int m2);

// Eigenpairs of a multivariate covariance kernel defined through per-marker
// basis functions with coefficient covariance Q (finite Karhunen-Loeve
// construction). basis_on_grid[k] holds the marker-k basis functions in
// columns; weights are the scalar-product weights (unit by default).
MfpcBasis build_kl_eigenbasis(const std::vector<Eigen::MatrixXd>& basis_on_grid,
                              const Eigen::MatrixXd& coef_cov, const Eigen::VectorXd& grid,
                              const Eigen::VectorXd& weights = Eigen::VectorXd());

} // namespace mfjm::fpca
