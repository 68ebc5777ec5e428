#include "mfjm/evalkit.hpp"

#include <cmath>

#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::metrics {

Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& samples) {
    return samples.colwise().mean().transpose();
}

Eigen::VectorXd sample_quantiles(const Eigen::MatrixXd& samples, double p) {
    Eigen::VectorXd out(samples.cols());
    std::vector<double> col(samples.rows());
    for (int j = 0; j < samples.cols(); ++j) {
        for (int i = 0; i < samples.rows(); ++i) col[static_cast<std::size_t>(i)] = samples(i, j);
        out(j) = quantile_type7(col, p);
    }
    return out;
}

namespace {

PredictorMetrics metrics_impl(const Eigen::VectorXd& truth, const Eigen::MatrixXd& samples,
                              bool truth_minus_estimate) {
    if (samples.cols() != truth.size())
        throw ConfigError("metrics: truth/sample point counts differ");
    if (samples.rows() < 2) throw ConfigError("metrics: need MCMC samples");
    const Eigen::VectorXd mean = posterior_mean(samples);
    const Eigen::VectorXd lo = sample_quantiles(samples, 0.025);
    const Eigen::VectorXd hi = sample_quantiles(samples, 0.975);
    PredictorMetrics out;
    const Eigen::VectorXd err = mean - truth;
    out.bias = truth_minus_estimate ? -err.mean() : err.mean();
    out.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    double covered = 0.0;
    for (int j = 0; j < truth.size(); ++j)
        if (lo(j) <= truth(j) && truth(j) <= hi(j)) covered += 1.0;
    out.coverage = covered / static_cast<double>(truth.size());
    return out;
}

} // namespace

PredictorMetrics longitudinal_metrics(const Eigen::VectorXd& truth,
                                      const Eigen::MatrixXd& samples) {
    return metrics_impl(truth, samples, false);
}

PredictorMetrics survival_metrics(const Eigen::VectorXd& truth,
                                  const Eigen::MatrixXd& samples) {
    return metrics_impl(truth, samples, true);
}

Eigen::VectorXd mfpc_error(const fpca::MfpcBasis& truth, const fpca::MfpcBasis& estimate) {
    if (truth.grid.size() != estimate.grid.size() ||
        (truth.grid - estimate.grid).cwiseAbs().maxCoeff() > 1e-10)
        throw SchemaError("mfpc_error: bases live on different grids");
    if (truth.num_markers() != estimate.num_markers())
        throw SchemaError("mfpc_error: marker counts differ");
    const int m = std::min(truth.truncation, estimate.truncation);
    const Eigen::VectorXd w = trapezoid_weights(truth.grid);
    Eigen::VectorXd out(m);
    for (int c = 0; c < m; ++c) {
        double minus = 0.0, plus = 0.0;
        for (int k = 0; k < truth.num_markers(); ++k) {
            const Eigen::VectorXd d1 =
                truth.eigenfunctions[k].col(c) - estimate.eigenfunctions[k].col(c);
            const Eigen::VectorXd d2 =
                truth.eigenfunctions[k].col(c) + estimate.eigenfunctions[k].col(c);
            minus += truth.weights(k) * (w.array() * d1.array().square()).sum();
            plus += truth.weights(k) * (w.array() * d2.array().square()).sum();
        }
        out(c) = std::min(minus, plus);
    }
    return out;
}

EvalReport aggregate_reports(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw ConfigError("aggregate_reports: empty input");
    EvalReport agg;
    agg.replicates = static_cast<int>(reports.size());
    for (const auto& [name, _] : reports.front().predictor) {
        PredictorMetrics m;
        for (const auto& r : reports) {
            const auto it = r.predictor.find(name);
            if (it == r.predictor.end())
                throw ConfigError("aggregate_reports: predictor '" + name + "' missing");
            m.bias += it->second.bias;
            m.rmse += it->second.rmse;
            m.coverage += it->second.coverage;
        }
        const double r = static_cast<double>(reports.size());
        m.bias /= r;
        m.rmse /= r;
        m.coverage /= r;
        agg.predictor[name] = m;
    }
    for (const auto& [name, first] : reports.front().time_resolved) {
        TimeResolvedMetrics t;
        t.grid = first.grid;
        t.bias = Eigen::VectorXd::Zero(first.grid.size());
        t.rmse = Eigen::VectorXd::Zero(first.grid.size());
        t.coverage = Eigen::VectorXd::Zero(first.grid.size());
        t.n_risk = Eigen::VectorXd::Zero(first.grid.size());
        for (const auto& r : reports) {
            const auto& tr = r.time_resolved.at(name);
            t.bias += tr.bias;
            t.rmse += tr.rmse;
            t.coverage += tr.coverage;
            t.n_risk += tr.n_risk;
        }
        const double r = static_cast<double>(reports.size());
        t.bias /= r;
        t.rmse /= r;
        t.coverage /= r;
        t.n_risk /= r;
        agg.time_resolved[name] = t;
    }
    int max_m = 0;
    for (const auto& r : reports)
        max_m = std::max(max_m, static_cast<int>(r.mfpc_errors.size()));
    if (max_m > 0) {
        agg.mfpc_errors = Eigen::VectorXd::Zero(max_m);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(max_m);
        for (const auto& r : reports)
            for (int c = 0; c < r.mfpc_errors.size(); ++c) {
                agg.mfpc_errors(c) += r.mfpc_errors(c);
                counts(c) += 1.0;
            }
        for (int c = 0; c < max_m; ++c)
            if (counts(c) > 0) agg.mfpc_errors(c) /= counts(c);
    }
    return agg;
}

} // namespace mfjm::metrics
