#include "mfjm/fpca.hpp"

#include <algorithm>
#include <cmath>

#include "mfjm/bspline.hpp"
#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::fpca {

Eigen::VectorXd penalized_lsq_gcv(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                                  const Eigen::VectorXd& response, double* chosen_lambda) {
    const auto n = static_cast<double>(design.rows());
    const Eigen::MatrixXd xtx = design.transpose() * design;
    const Eigen::VectorXd xty = design.transpose() * response;
    const double yty = response.squaredNorm();
    const bool penalized = penalty.size() > 0 && penalty.cwiseAbs().maxCoeff() > 0.0;
    if (!penalized) {
        Eigen::VectorXd beta = design.colPivHouseholderQr().solve(response);
        if (!beta.allFinite()) throw NumericalError("penalized_lsq_gcv: singular normal equations");
        if (chosen_lambda) *chosen_lambda = 0.0;
        return beta;
    }
    double best_gcv = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_beta;
    double best_lambda = 1.0;
    for (int step = 0; step <= 48; ++step) {
        const double lambda = std::pow(10.0, -6.0 + 0.25 * step);
        const Eigen::MatrixXd a = xtx + lambda * penalty;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() != Eigen::Success) continue;
        const Eigen::VectorXd beta = ldlt.solve(xty);
        const double edf = ldlt.solve(xtx).trace();
        const double rss = yty - 2.0 * beta.dot(xty) + beta.dot(xtx * beta);
        const double denom = n - edf;
        if (denom <= 0.5) continue;
        const double gcv = n * std::max(rss, 0.0) / (denom * denom);
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_beta = beta;
            best_lambda = lambda;
        }
    }
    if (best_beta.size() == 0)
        throw NumericalError("penalized_lsq_gcv: no valid smoothing parameter found");
    if (chosen_lambda) *chosen_lambda = best_lambda;
    return best_beta;
}

CenteredObservations estimate_marker_mean(const LongSurvDataset& data, int marker,
                                          const std::vector<jm::TermSpec>& fixed_terms,
                                          const std::vector<int>& subjects,
                                          const Eigen::VectorXd& grid) {
    std::vector<int> row_subject;
    std::vector<double> row_time, row_value;
    std::vector<std::pair<int, int>> row_origin; // (position in subjects, obs index)
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        const auto& obs = data.subjects[subjects[s]].marker_obs[marker];
        for (std::size_t j = 0; j < obs.size(); ++j) {
            row_subject.push_back(subjects[s]);
            row_time.push_back(obs[j].time);
            row_value.push_back(obs[j].value);
            row_origin.emplace_back(static_cast<int>(s), static_cast<int>(j));
        }
    }
    if (row_value.empty())
        throw SchemaError("marker " + data.marker_names[marker] + " has no observations");

    const long rows = static_cast<long>(row_value.size());
    const Eigen::VectorXd times = Eigen::Map<Eigen::VectorXd>(row_time.data(), rows);
    const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(row_value.data(), rows);
    auto fd = jm::build_fixed_design(fixed_terms, data, row_subject, times);
    Eigen::VectorXd beta = penalized_lsq_gcv(fd.design, fd.penalty, y);
    const Eigen::VectorXd fitted = fd.design * beta;

    CenteredObservations out;
    out.per_subject.resize(subjects.size());
    for (long r = 0; r < rows; ++r) {
        const auto [s, j] = row_origin[r];
        out.per_subject[s].push_back({row_time[static_cast<std::size_t>(r)],
                                      y(r) - fitted(r)});
        (void)j;
    }

    // Covariate-free part of the mean on the grid (intercept and time terms).
    out.grid_mean = Eigen::VectorXd::Zero(grid.size());
    for (std::size_t q = 0; q < fd.terms.size(); ++q) {
        const auto kind = fd.terms[q].spec.kind;
        if (kind != jm::TermKind::Intercept && kind != jm::TermKind::LinearTime &&
            kind != jm::TermKind::SmoothTime)
            continue;
        std::vector<double> buf(fd.terms[q].dim);
        for (int g = 0; g < grid.size(); ++g) {
            fd.terms[q].eval_row(data, row_subject.front(), grid(g), buf.data());
            for (int c = 0; c < fd.terms[q].dim; ++c)
                out.grid_mean(g) += buf[c] * beta(fd.offsets[q] + c);
        }
    }
    return out;
}

Eigen::MatrixXd smooth_covariance(const std::vector<std::vector<Observation>>& centered,
                                  const Eigen::VectorXd& grid, int marginal_basis_size,
                                  double* error_variance) {
    const double lo = grid(0), hi = grid(grid.size() - 1);
    spline::SplineBasisDef margin{3, marginal_basis_size, lo, hi, 2};
    margin.validate();

    // Off-diagonal crossproducts on the s <= t triangle and the raw diagonal
    // crossproducts (same observation with itself) kept apart so the noise
    // variance stays out of the smooth surface.
    std::vector<double> s_lo, s_hi, cross, diag_t, diag_v;
    int contributors = 0;
    for (const auto& obs : centered) {
        if (obs.size() >= 2) ++contributors;
        for (std::size_t j = 0; j < obs.size(); ++j) {
            diag_t.push_back(obs[j].time);
            diag_v.push_back(obs[j].value * obs[j].value);
            for (std::size_t l = j + 1; l < obs.size(); ++l) {
                s_lo.push_back(std::min(obs[j].time, obs[l].time));
                s_hi.push_back(std::max(obs[j].time, obs[l].time));
                cross.push_back(obs[j].value * obs[l].value);
            }
        }
    }
    if (contributors < 2 || cross.size() < static_cast<std::size_t>(marginal_basis_size))
        throw EstimationError("smooth_covariance: not enough off-diagonal crossproducts");

    const long rows = static_cast<long>(cross.size());
    const int d = marginal_basis_size;
    Eigen::MatrixXd design(rows, d * d);
    {
        const Eigen::VectorXd v_lo = Eigen::Map<Eigen::VectorXd>(s_lo.data(), rows);
        const Eigen::VectorXd v_hi = Eigen::Map<Eigen::VectorXd>(s_hi.data(), rows);
        const Eigen::MatrixXd b_lo = spline::eval_bspline_basis(margin, v_lo);
        const Eigen::MatrixXd b_hi = spline::eval_bspline_basis(margin, v_hi);
        for (long r = 0; r < rows; ++r)
            for (int a = 0; a < d; ++a)
                design.block(r, a * d, 1, d) = b_lo(r, a) * b_hi.row(r);
    }
    const Eigen::MatrixXd k1 = spline::difference_penalty(d, 2);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(d * d, d * d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            penalty.block(a * d, b * d, d, d) =
                k1(a, b) * eye + (a == b ? k1 : Eigen::MatrixXd::Zero(d, d));
        }

    const Eigen::VectorXd z = Eigen::Map<Eigen::VectorXd>(cross.data(), rows);
    const Eigen::VectorXd theta = penalized_lsq_gcv(design, penalty, z);

    // Evaluate on the lower triangle and reflect for exact symmetry.
    const Eigen::MatrixXd bg = spline::eval_bspline_basis(margin, grid);
    const int g = static_cast<int>(grid.size());
    Eigen::MatrixXd surface(g, g);
    Eigen::Map<const Eigen::MatrixXd> theta_mat(theta.data(), d, d); // theta[a*d+b] = (a,b)
    for (int i = 0; i < g; ++i)
        for (int j = i; j < g; ++j) {
            const double value = bg.row(i) * theta_mat.transpose() * bg.row(j).transpose();
            surface(i, j) = value;
            surface(j, i) = value;
        }

    if (error_variance) {
        // 1-D smooth of the raw diagonal crossproducts minus the surface
        // diagonal, averaged over the grid and floored.
        const long nd = static_cast<long>(diag_t.size());
        const Eigen::VectorXd vt = Eigen::Map<Eigen::VectorXd>(diag_t.data(), nd);
        const Eigen::VectorXd vv = Eigen::Map<Eigen::VectorXd>(diag_v.data(), nd);
        const Eigen::MatrixXd bd = spline::eval_bspline_basis(margin, vt);
        const Eigen::VectorXd dcoef = penalized_lsq_gcv(bd, k1, vv);
        const Eigen::VectorXd smooth_diag = bg * dcoef;
        double total = 0.0;
        for (int i = 0; i < g; ++i) total += smooth_diag(i) - surface(i, i);
        *error_variance = std::max(total / g, 1e-8);
    }
    return surface;
}

CovarianceEigen eigen_decompose_covariance(const Eigen::MatrixXd& surface,
                                           const Eigen::VectorXd& grid, double pve) {
    if (surface.rows() != grid.size() || surface.cols() != grid.size())
        throw ConfigError("eigen_decompose_covariance: surface/grid mismatch");
    if ((surface - surface.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw ConfigError("eigen_decompose_covariance: surface not symmetric");
    const Eigen::VectorXd w = trapezoid_weights(grid);
    const Eigen::VectorXd ws = w.array().sqrt();
    Eigen::MatrixXd a = ws.asDiagonal() * surface * ws.asDiagonal();
    a = 0.5 * (a + a.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    if (eig.info() != Eigen::Success)
        throw NumericalError("eigen_decompose_covariance failed");

    std::vector<std::pair<double, int>> positive;
    for (int i = 0; i < eig.eigenvalues().size(); ++i)
        if (eig.eigenvalues()(i) > 0.0) positive.emplace_back(eig.eigenvalues()(i), i);
    if (positive.empty())
        throw EstimationError("eigen_decompose_covariance: no positive eigenvalues");
    std::sort(positive.begin(), positive.end(),
              [](const auto& x, const auto& y) { return x.first > y.first; });

    double total = 0.0;
    for (const auto& [v, _] : positive) total += v;
    int m = 0;
    double cum = 0.0;
    for (const auto& [v, _] : positive) {
        cum += v;
        ++m;
        if (cum / total >= pve - 1e-12) break;
    }

    CovarianceEigen out;
    out.num_components = m;
    out.eigenvalues.resize(m);
    out.eigenfunctions.resize(grid.size(), m);
    const Eigen::VectorXd wsi = ws.cwiseInverse();
    for (int j = 0; j < m; ++j) {
        out.eigenvalues(j) = positive[j].first;
        out.eigenfunctions.col(j) = wsi.asDiagonal() * eig.eigenvectors().col(positive[j].second);
    }
    return out;
}

Eigen::MatrixXd predict_scores_ce(const std::vector<std::vector<Observation>>& centered,
                                  const UfpcaResult& ufpca) {
    const int m = ufpca.num_components();
    const double sigma2 = ufpca.error_variance;
    if (sigma2 <= 0.0)
        throw ConfigError("predict_scores_ce: error variance must be positive");
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<long>(centered.size()), m);
    const Eigen::VectorXd d = ufpca.eigenvalues;
    for (std::size_t i = 0; i < centered.size(); ++i) {
        const auto& obs = centered[i];
        if (obs.empty()) continue; // prior mean
        const long ni = static_cast<long>(obs.size());
        Eigen::MatrixXd phi(ni, m);
        Eigen::VectorXd y(ni);
        for (long j = 0; j < ni; ++j) {
            y(j) = obs[static_cast<std::size_t>(j)].value;
            for (int c = 0; c < m; ++c)
                phi(j, c) = interp_linear(ufpca.grid, ufpca.eigenfunctions.col(c),
                                          obs[static_cast<std::size_t>(j)].time);
        }
        Eigen::MatrixXd inner = phi * d.asDiagonal() * phi.transpose();
        inner.diagonal().array() += sigma2;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("predict_scores_ce: singular inner matrix for subject " +
                                 std::to_string(i));
        scores.row(static_cast<long>(i)) =
            (d.asDiagonal() * phi.transpose() * ldlt.solve(y)).transpose();
    }
    return scores;
}

std::vector<int> trim_subjects_for_mfpca(const LongSurvDataset& data, double fraction,
                                         int min_measurements) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("trim fraction must be in (0,1)");
    const double cutoff = fraction * data.t_max;
    std::vector<int> keep;
    for (int i = 0; i < data.num_subjects(); ++i) {
        bool ok = true;
        for (int k = 0; k < data.num_markers() && ok; ++k) {
            const auto& obs = data.subjects[i].marker_obs[k];
            if (static_cast<int>(obs.size()) < min_measurements) ok = false;
            bool after = false;
            for (const auto& o : obs)
                if (o.time > cutoff) after = true;
            ok = ok && after;
        }
        if (ok) keep.push_back(i);
    }
    if (keep.empty())
        throw EstimationError("trimming rule excluded every subject");
    return keep;
}

UfpcaResult run_ufpca(const LongSurvDataset& data, int marker,
                      const std::vector<jm::TermSpec>& fixed_terms,
                      const std::vector<int>& subjects, const UfpcaOptions& options) {
    UfpcaResult out;
    out.marker = marker;
    out.grid = linspace(0.0, data.t_max, options.grid_size);
    auto centered = estimate_marker_mean(data, marker, fixed_terms, subjects, out.grid);
    out.mean = centered.grid_mean;
    double sigma2 = 0.0;
    const Eigen::MatrixXd surface = smooth_covariance(centered.per_subject, out.grid,
                                                      options.marginal_basis_size, &sigma2);
    auto eig = eigen_decompose_covariance(surface, out.grid, options.pve);
    out.eigenfunctions = std::move(eig.eigenfunctions);
    out.eigenvalues = std::move(eig.eigenvalues);
    out.error_variance = sigma2;
    out.scores = predict_scores_ce(centered.per_subject, out);
    return out;
}

MfpcBasis combine_mfpca(const std::vector<UfpcaResult>& ufpcas, WeightRule rule) {
    const int k_count = static_cast<int>(ufpcas.size());
    Eigen::VectorXd w = Eigen::VectorXd::Ones(k_count);
    if (rule == WeightRule::InverseIntegratedVariance)
        for (int k = 0; k < k_count; ++k) {
            const double total = ufpcas[k].eigenvalues.sum();
            if (total <= 0.0) throw EstimationError("marker with zero integrated variance");
            w(k) = 1.0 / total;
        }
    return combine_mfpca(ufpcas, w);
}

MfpcBasis combine_mfpca(const std::vector<UfpcaResult>& ufpcas, const Eigen::VectorXd& weights) {
    const int k_count = static_cast<int>(ufpcas.size());
    if (k_count == 0) throw ConfigError("combine_mfpca: no markers");
    if (weights.size() != k_count) throw ConfigError("combine_mfpca: weight count mismatch");
    const long n = ufpcas[0].scores.rows();
    for (const auto& u : ufpcas) {
        if (u.grid.size() != ufpcas[0].grid.size() ||
            (u.grid - ufpcas[0].grid).cwiseAbs().maxCoeff() > 1e-12)
            throw SchemaError("combine_mfpca: mismatched grids");
        if (u.scores.rows() != n) throw SchemaError("combine_mfpca: mismatched subject sets");
    }

    int m_total = 0;
    for (const auto& u : ufpcas) m_total += u.num_components();

    // Stacked score matrix and its weighted covariance.
    Eigen::MatrixXd xi(n, m_total);
    Eigen::VectorXd col_weight(m_total);
    int offset = 0;
    for (int k = 0; k < k_count; ++k) {
        const int mk = ufpcas[k].num_components();
        xi.middleCols(offset, mk) = ufpcas[k].scores;
        col_weight.segment(offset, mk).setConstant(std::sqrt(weights(k)));
        offset += mk;
    }
    const Eigen::RowVectorXd means = xi.colwise().mean();
    xi.rowwise() -= means;
    Eigen::MatrixXd score_cov = xi.transpose() * xi / std::max(1.0, static_cast<double>(n - 1));
    Eigen::MatrixXd z = col_weight.asDiagonal() * score_cov * col_weight.asDiagonal();
    z = 0.5 * (z + z.transpose().eval());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(z);
    if (eig.info() != Eigen::Success) throw NumericalError("combine_mfpca: eigendecomposition failed");

    MfpcBasis out;
    out.grid = ufpcas[0].grid;
    out.weights = weights;
    out.eigenvalues.resize(m_total);
    out.combination_weights.resize(m_total, m_total);
    out.eigenfunctions.assign(k_count, Eigen::MatrixXd::Zero(out.grid.size(), m_total));
    for (int m = 0; m < m_total; ++m) {
        const int src = m_total - 1 - m;
        out.eigenvalues(m) = std::max(0.0, eig.eigenvalues()(src));
        const Eigen::VectorXd c = eig.eigenvectors().col(src);
        out.combination_weights.col(m) = c;
        int off = 0;
        for (int k = 0; k < k_count; ++k) {
            const int mk = ufpcas[k].num_components();
            out.eigenfunctions[k].col(m) = std::pow(weights(k), -0.5) *
                                           (ufpcas[k].eigenfunctions * c.segment(off, mk));
            off += mk;
        }
    }

    // Renormalize each eigenpair to unit weighted norm (the univariate
    // eigenfunctions are only grid-orthonormal within tolerance).
    out.truncation = m_total;
    for (int m = 0; m < m_total; ++m) {
        const double nrm2 = component_scalar_product(out, m, m);
        if (nrm2 <= 0.0) continue;
        const double nrm = std::sqrt(nrm2);
        for (int k = 0; k < k_count; ++k) out.eigenfunctions[k].col(m) /= nrm;
        out.eigenvalues(m) *= nrm2;
    }
    // Keep the eigenvalues sorted after renormalization.
    std::vector<int> order(m_total);
    for (int i = 0; i < m_total; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return out.eigenvalues(a) > out.eigenvalues(b); });
    MfpcBasis sorted = out;
    for (int m = 0; m < m_total; ++m) {
        sorted.eigenvalues(m) = out.eigenvalues(order[m]);
        sorted.combination_weights.col(m) = out.combination_weights.col(order[m]);
        for (int k = 0; k < k_count; ++k)
            sorted.eigenfunctions[k].col(m) = out.eigenfunctions[k].col(order[m]);
    }
    sorted.validate();
    return sorted;
}

MfpcBasis truncate_basis(const MfpcBasis& basis, double pve) {
    if (!(pve > 0.0 && pve <= 1.0)) throw ConfigError("pve must be in (0, 1]");
    const double total = basis.eigenvalues.sum();
    int m = basis.total_components();
    if (total > 0.0) {
        double cum = 0.0;
        for (int i = 0; i < basis.total_components(); ++i) {
            cum += basis.eigenvalues(i);
            if (cum / total >= pve - 1e-12) {
                m = i + 1;
                break;
            }
        }
    }
    MfpcBasis out = basis;
    out.eigenvalues = basis.eigenvalues.head(m);
    for (auto& ef : out.eigenfunctions) ef = ef.leftCols(m).eval();
    if (basis.combination_weights.size() > 0)
        out.combination_weights = basis.combination_weights.leftCols(m).eval();
    out.truncation = m;
    out.validate();
    return out;
}

MfpcBasis estimate_mfpc_basis(const LongSurvDataset& data,
                              const std::vector<std::vector<jm::TermSpec>>& mu_fixed_terms,
                              const MfpcaOptions& options) {
    if (static_cast<int>(mu_fixed_terms.size()) != data.num_markers())
        throw ConfigError("estimate_mfpc_basis: term list count != marker count");
    const auto subjects =
        trim_subjects_for_mfpca(data, options.trim_fraction, options.trim_min_measurements);
    std::vector<UfpcaResult> ufpcas;
    ufpcas.reserve(data.num_markers());
    for (int k = 0; k < data.num_markers(); ++k)
        ufpcas.push_back(run_ufpca(data, k, mu_fixed_terms[k], subjects, options.ufpca));
    return combine_mfpca(ufpcas, options.weights);
}

} // namespace mfjm::fpca
