#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/mfpc.hpp"

namespace mfjm::metrics {

struct PredictorMetrics {
    double bias = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;
};

struct TimeResolvedMetrics {
    Eigen::VectorXd grid;
    Eigen::VectorXd bias, rmse, coverage;
    Eigen::VectorXd n_risk;
};

// Longitudinal predictors: averaged over the observed (i, j) pairs, bias is
// estimate minus truth. samples holds one MCMC draw per row, one evaluation
// point per column.
PredictorMetrics longitudinal_metrics(const Eigen::VectorXd& truth,
                                      const Eigen::MatrixXd& samples);

// Survival predictors at the follow-up times: bias is truth minus estimate.
PredictorMetrics survival_metrics(const Eigen::VectorXd& truth,
                                  const Eigen::MatrixXd& samples);

// Pointwise 2.5%/97.5% coverage indicator and posterior-mean error helpers.
Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& samples);
Eigen::VectorXd sample_quantiles(const Eigen::MatrixXd& samples, double p);

// Squared weighted-norm errors per component after sign resolution:
// min(||psi - psihat||^2, ||psi + psihat||^2) under the truth's weights.
Eigen::VectorXd mfpc_error(const fpca::MfpcBasis& truth, const fpca::MfpcBasis& estimate);

// Per-predictor metrics for one replicate plus study-level aggregation
// (arithmetic mean of per-replicate metrics).
struct EvalReport {
    std::map<std::string, PredictorMetrics> predictor;
    std::map<std::string, TimeResolvedMetrics> time_resolved;
    Eigen::VectorXd mfpc_errors; // empty when the basis was not estimated
    int replicates = 1;
};

EvalReport aggregate_reports(const std::vector<EvalReport>& reports);

} // namespace mfjm::metrics
