#pragma once

#include <cstdint>
#include <vector>

#include "mfjm/evalkit.hpp"
#include "mfjm/fpca.hpp"
#include "mfjm/sampler.hpp"
#include "mfjm/simgen.hpp"

namespace mfjm::study {

enum class BasisMode { True, Estimate, Truncate };

struct StudyConfig {
    sim::SimScenario scenario;
    int replicates = 20;
    std::uint64_t base_seed = 1;
    jm::ChainConfig chain;
    BasisMode basis_mode = BasisMode::True;
    double truncate_pve = 0.99;
    fpca::MfpcaOptions mfpca;
    jm::QuadratureRule quad;
    int threads = 0; // 0 = hardware concurrency
    bool time_resolved = false;
    int model_grid_size = 101;
};

// Model specification used for the simulation studies: P-spline baseline
// hazard (20 cubic basis functions before centering, third-order penalty),
// fixed effects matching the generating form, constant associations and
// noise levels, and the MFPC random effect.
jm::ModelSpec study_model_spec(const sim::SimScenario& scenario,
                               const fpca::MfpcBasis& basis);

struct ReplicateResult {
    metrics::EvalReport report;
    Eigen::VectorXd alpha_mean, alpha_lo, alpha_hi; // per marker
    std::vector<double> acceptance;
    int basis_components = 0;
};

// Per-replicate evaluation of a fitted model against the generator truth.
metrics::EvalReport evaluate_fit(const sim::SimulatedData& simdata, const jm::FittedModel& fit,
                                 bool time_resolved);

ReplicateResult run_replicate(const StudyConfig& config, int rep_index);

// Fans replicates out over worker threads; each replicate is independent
// given its derived seed.
std::vector<ReplicateResult> run_study(const StudyConfig& config);

} // namespace mfjm::study
