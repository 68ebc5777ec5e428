#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/engine.hpp"
#include "mfjm/rng.hpp"

namespace mfjm::jm {

struct ChainConfig {
    int iterations = 5500;
    int burnin = 500;
    int thin = 5;
    std::uint64_t seed = 1;
    int newton_max_cycles = 200;
    double newton_tol = 1e-6;
};

// Posterior-mode coefficients, retained MCMC draws per block, and
// per-block acceptance diagnostics.
struct FittedModel {
    std::shared_ptr<const CompiledModel> model;
    QuadratureRule quad;
    std::vector<std::string> block_names;
    std::vector<Eigen::VectorXd> mode;    // per block
    std::vector<Eigen::MatrixXd> samples; // per block: draws x dim
    std::vector<double> acceptance;       // per block
    std::vector<std::string> tau2_names;
    Eigen::MatrixXd tau2_samples; // draws x #penalized blocks
    Eigen::VectorXd tau2_mode;
    std::vector<std::string> warnings;
    int ridge_fallbacks = 0;

    int num_samples() const {
        return samples.empty() ? 0 : static_cast<int>(samples.front().rows());
    }
    int block_index(const std::string& name) const;
};

// Blockwise Newton-Raphson ascent on the log posterior with fixed variance
// parameters. Step length 1 except for the survival predictors lambda and
// gamma (0.1). Throws OptimizationError when the log posterior decreases 10
// cycles in a row.
void posterior_mode(JointModelEngine& engine, int max_cycles = 200, double tol = 1e-6);

// Metropolis-Hastings with second-order Taylor proposals per coefficient
// block (forward and reverse proposal densities enter the ratio), inverse
// gamma Gibbs draws for conjugate variance parameters and slice sampling
// otherwise. The engine state must hold the starting values (typically the
// posterior mode).
FittedModel mcmc_sample(JointModelEngine& engine, const ChainConfig& config);

// Runs Newton initialization (intercepts, variances, mode) and the chain.
FittedModel fit_joint_model(JointModelEngine& engine, const ChainConfig& config);

// Draws of eta_label at arbitrary (subject, time) points, one row per
// retained MCMC draw. For Mu the MFPC random effects are included.
Eigen::MatrixXd eval_eta_samples(const FittedModel& fit, Label label, int marker,
                                 const std::vector<int>& subjects,
                                 const Eigen::VectorXd& times);

// Univariate stepping-out slice sampler (used for non-conjugate variance
// priors); exposed for testing.
double slice_sample(const std::function<double(double)>& log_target, double x0, Rng& rng,
                    double width = 1.0, int max_steps = 50);

} // namespace mfjm::jm
