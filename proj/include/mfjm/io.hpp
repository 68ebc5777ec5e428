#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfjm/evalkit.hpp"
#include "mfjm/mfpc.hpp"
#include "mfjm/sampler.hpp"
#include "mfjm/simgen.hpp"
#include "mfjm/study.hpp"

namespace mfjm::io {

// MFPC basis as a JSON document (grid, weights, per-marker row-major
// eigenfunction matrices, eigenvalues, truncation). Doubles are written with
// round-trip precision so export/import is bit-exact.
void write_basis_json(const fpca::MfpcBasis& basis, const std::string& path);
fpca::MfpcBasis read_basis_json(const std::string& path);

// Scenario echo with the seed; read_scenario_json rebuilds the published
// configurations by name and applies stored overrides.
void write_scenario_json(const sim::SimScenario& scenario, std::uint64_t seed,
                         const std::string& path);
sim::SimScenario read_scenario_json(const std::string& path, std::uint64_t* seed = nullptr);

// Posterior samples as CSV: one column per scalar parameter (block
// coefficients first, then tau2 columns), one row per retained draw.
void write_samples_csv(const jm::FittedModel& fit, const std::string& path);

// Posterior mean, 2.5%/97.5% quantiles and acceptance rates per block.
void write_summary_json(const jm::FittedModel& fit, const std::string& path);

// Rebuilds a FittedModel from a samples CSV written by write_samples_csv,
// matching columns to the compiled model's blocks by name.
jm::FittedModel read_samples_csv(std::shared_ptr<const jm::CompiledModel> model,
                                 const std::string& path);

// Evaluation report exports: long-format CSV (predictor, metric, value,
// replicate) and a JSON aggregate.
void write_report_csv(const std::vector<metrics::EvalReport>& replicate_reports,
                      const std::string& path);
void write_report_json(const metrics::EvalReport& aggregate, const std::string& path);

// Model-spec configuration (term lists, priors, chain settings) from a JSON
// or TOML file; flat TOML files are converted to the same JSON shape.
struct FitConfig {
    jm::ModelSpec spec; // basis must be attached by the caller before use
    jm::ChainConfig chain;
    jm::QuadratureRule quad;
};
FitConfig read_fit_config(const std::string& path, const fpca::MfpcBasis& basis,
                          const std::vector<std::string>& marker_names);

// Minimal TOML subset (sections, key = value scalars and flat arrays)
// converted to a JSON string; exposed for tests.
std::string toml_to_json(const std::string& toml_text);

} // namespace mfjm::io
