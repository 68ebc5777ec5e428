// Batch entry point: simulate joint longitudinal/survival datasets, estimate
// MFPC bases, fit the Bayesian joint model, evaluate fits against generator
// truth, and run full replicate studies.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "mfjm/dataset.hpp"
#include "mfjm/engine.hpp"
#include "mfjm/errors.hpp"
#include "mfjm/fpca.hpp"
#include "mfjm/io.hpp"
#include "mfjm/sampler.hpp"
#include "mfjm/simgen.hpp"
#include "mfjm/study.hpp"

namespace fs = std::filesystem;
using namespace mfjm;

namespace {

sim::SimScenario scenario_by_name(const std::string& name, int n, int markers) {
    sim::SimScenario s;
    if (name == "I" || name == "i")
        s = sim::build_scenario_I();
    else if (name == "II" || name == "ii")
        s = sim::build_scenario_II();
    else
        throw ConfigError("unknown scenario '" + name + "' (use I or II)");
    if (markers > 0 && markers != s.num_markers) s = sim::restrict_markers(s, markers);
    if (n > 0) s.n = n;
    return s;
}

std::vector<std::vector<jm::TermSpec>> default_mean_terms(int k_count) {
    return std::vector<std::vector<jm::TermSpec>>(
        k_count, {jm::TermSpec::intercept(), jm::TermSpec::linear_time()});
}

int cmd_simulate(const std::string& scenario_name, int n, int markers, std::uint64_t seed,
                 const std::string& out_dir) {
    const auto scenario = scenario_by_name(scenario_name, n, markers);
    const auto simdata = sim::simulate(scenario, seed);
    fs::create_directories(out_dir);
    write_dataset_csv(simdata.data, out_dir + "/survival.csv", out_dir + "/longitudinal.csv");
    io::write_scenario_json(scenario, seed, out_dir + "/scenario.json");
    std::cout << "wrote " << simdata.data.num_subjects() << " subjects, "
              << simdata.data.num_markers() << " markers to " << out_dir << "\n";
    return 0;
}

int cmd_mfpca(const std::string& surv, const std::string& lng, const std::string& out,
              const std::string& weights, double pve_uni, double trim, int min_meas,
              int marginal_basis, const std::string& mean_terms, double pve_multi) {
    const auto data = read_dataset_csv(surv, lng);
    fpca::MfpcaOptions opts;
    opts.ufpca.pve = pve_uni;
    opts.ufpca.marginal_basis_size = marginal_basis;
    opts.trim_fraction = trim;
    opts.trim_min_measurements = min_meas;
    if (weights == "unit")
        opts.weights = fpca::WeightRule::Unit;
    else if (weights == "inverse-variance")
        opts.weights = fpca::WeightRule::InverseIntegratedVariance;
    else
        throw ConfigError("--weights must be unit or inverse-variance");

    std::vector<std::vector<jm::TermSpec>> terms;
    if (mean_terms.empty()) {
        terms = default_mean_terms(data.num_markers());
    } else {
        std::vector<jm::TermSpec> list;
        std::stringstream ss(mean_terms);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item == "intercept")
                list.push_back(jm::TermSpec::intercept());
            else if (item == "time")
                list.push_back(jm::TermSpec::linear_time());
            else if (item.rfind("linear:", 0) == 0)
                list.push_back(jm::TermSpec::linear(item.substr(7)));
            else if (item.rfind("interaction:", 0) == 0)
                list.push_back(jm::TermSpec::time_interaction(item.substr(12)));
            else
                throw ConfigError("unknown mean term '" + item + "'");
        }
        terms.assign(data.num_markers(), list);
    }
    auto basis = fpca::estimate_mfpc_basis(data, terms, opts);
    if (pve_multi < 1.0) basis = fpca::truncate_basis(basis, pve_multi);
    io::write_basis_json(basis, out);
    std::cout << "estimated basis with " << basis.truncation << " of "
              << basis.total_components() << " components\n";
    return 0;
}

int cmd_fit(const std::string& surv, const std::string& lng, const std::string& basis_path,
            const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
            int iterations, int burnin, int thin) {
    const auto data = read_dataset_csv(surv, lng);
    const auto basis = io::read_basis_json(basis_path);
    io::FitConfig cfg = io::read_fit_config(config_path, basis, data.marker_names);
    if (seed != 0) cfg.chain.seed = seed;
    if (iterations > 0) cfg.chain.iterations = iterations;
    if (burnin >= 0) cfg.chain.burnin = burnin;
    if (thin > 0) cfg.chain.thin = thin;

    auto model = jm::compile_model(cfg.spec, data);
    jm::JointModelEngine engine(model, cfg.quad);
    const auto fit = jm::fit_joint_model(engine, cfg.chain);
    fs::create_directories(out_dir);
    io::write_samples_csv(fit, out_dir + "/samples.csv");
    io::write_summary_json(fit, out_dir + "/summary.json");
    std::cout << "kept " << fit.num_samples() << " draws across "
              << fit.block_names.size() << " blocks\n";
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_evaluate(const std::string& surv, const std::string& lng,
                 const std::string& scenario_path, const std::string& basis_path,
                 const std::string& config_path, const std::string& samples_path,
                 const std::string& out_dir) {
    const auto data = read_dataset_csv(surv, lng);
    std::uint64_t seed = 0;
    const auto scenario = io::read_scenario_json(scenario_path, &seed);
    const auto simdata = sim::simulate(scenario, seed);
    const auto basis = io::read_basis_json(basis_path);
    io::FitConfig cfg = io::read_fit_config(config_path, basis, data.marker_names);
    auto model = jm::compile_model(cfg.spec, data);
    const auto fit = io::read_samples_csv(model, samples_path);
    const auto report = study::evaluate_fit(simdata, fit, false);
    fs::create_directories(out_dir);
    io::write_report_csv({report}, out_dir + "/report.csv");
    io::write_report_json(report, out_dir + "/report.json");
    std::cout << "evaluated " << report.predictor.size() << " predictors\n";
    return 0;
}

int cmd_replicate_study(const std::string& scenario_name, int n, int markers, int replicates,
                        std::uint64_t seed, const std::string& basis_mode,
                        const std::string& out_dir, int iterations, int burnin, int thin,
                        int threads) {
    study::StudyConfig cfg;
    cfg.scenario = scenario_by_name(scenario_name, n, markers);
    cfg.replicates = replicates;
    cfg.base_seed = seed;
    cfg.chain.iterations = iterations;
    cfg.chain.burnin = burnin;
    cfg.chain.thin = thin;
    cfg.threads = threads;
    if (basis_mode == "true")
        cfg.basis_mode = study::BasisMode::True;
    else if (basis_mode == "estimate")
        cfg.basis_mode = study::BasisMode::Estimate;
    else if (basis_mode.rfind("truncate:", 0) == 0) {
        cfg.basis_mode = study::BasisMode::Truncate;
        cfg.truncate_pve = std::stod(basis_mode.substr(9));
    } else {
        throw ConfigError("--basis must be true, estimate, or truncate:<pve>");
    }

    const auto results = study::run_study(cfg);
    std::vector<metrics::EvalReport> reports;
    for (const auto& r : results) reports.push_back(r.report);
    const auto aggregate = metrics::aggregate_reports(reports);
    fs::create_directories(out_dir);
    io::write_report_csv(reports, out_dir + "/replicates.csv");
    io::write_report_json(aggregate, out_dir + "/aggregate.json");
    std::cout << "replicates: " << replicates << "\n";
    for (const auto& [name, m] : aggregate.predictor)
        std::cout << name << ": bias " << m.bias << ", rmse " << m.rmse << ", coverage "
                  << m.coverage << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian joint models for multivariate longitudinal and survival data "
                 "with MFPC random effects"};
    app.require_subcommand(1);

    // simulate
    auto* simc = app.add_subcommand("simulate", "generate a scenario dataset");
    std::string scenario = "I", out_dir = ".";
    int n = 0, markers = 0;
    std::uint64_t seed = 0;
    simc->add_option("--scenario", scenario, "scenario name: I or II");
    simc->add_option("--n", n, "number of subjects (0 = published value)");
    simc->add_option("--markers", markers, "restrict scenario I to first K markers");
    simc->add_option("--seed", seed, "RNG seed")->required();
    simc->add_option("--out", out_dir, "output directory");

    // mfpca
    auto* mfc = app.add_subcommand("mfpca", "estimate the MFPC basis from CSV data");
    std::string surv = "survival.csv", lng = "longitudinal.csv", basis_out = "basis.json";
    std::string weights = "unit", mean_terms;
    double pve_uni = 0.99, trim = 0.1, pve_multi = 1.0;
    int min_meas = 1, marginal_basis = 7;
    mfc->add_option("--survival", surv, "survival CSV path");
    mfc->add_option("--longitudinal", lng, "longitudinal CSV path");
    mfc->add_option("--out", basis_out, "basis JSON output path");
    mfc->add_option("--weights", weights, "unit | inverse-variance");
    mfc->add_option("--pve-univariate", pve_uni, "univariate explained-variance threshold");
    mfc->add_option("--pve", pve_multi, "multivariate truncation threshold (1 = keep all)");
    mfc->add_option("--trim", trim, "trimming fraction of the time interval");
    mfc->add_option("--min-measurements", min_meas, "minimum observations per marker");
    mfc->add_option("--marginal-basis", marginal_basis, "covariance smoothing basis size");
    mfc->add_option("--mean-terms", mean_terms,
                    "comma list: intercept,time,linear:<z>,interaction:<z>");

    // fit
    auto* fitc = app.add_subcommand("fit", "fit the joint model");
    std::string basis_in = "basis.json", config_path = "model.json", fit_out = "fit";
    int iterations = 0, burnin = -1, thin = 0;
    fitc->add_option("--survival", surv, "survival CSV path");
    fitc->add_option("--longitudinal", lng, "longitudinal CSV path");
    fitc->add_option("--basis", basis_in, "basis JSON path")->required();
    fitc->add_option("--config", config_path, "model config (.json or .toml)")->required();
    fitc->add_option("--out", fit_out, "output directory");
    fitc->add_option("--seed", seed, "chain seed (overrides config)");
    fitc->add_option("--iterations", iterations, "MCMC iterations (overrides config)");
    fitc->add_option("--burnin", burnin, "burn-in iterations");
    fitc->add_option("--thin", thin, "thinning interval");

    // evaluate
    auto* evc = app.add_subcommand("evaluate", "compare a fit against generator truth");
    std::string scenario_json = "scenario.json", samples_csv = "fit/samples.csv",
                eval_out = "eval";
    evc->add_option("--survival", surv, "survival CSV path");
    evc->add_option("--longitudinal", lng, "longitudinal CSV path");
    evc->add_option("--scenario", scenario_json, "scenario echo JSON (truth source)")->required();
    evc->add_option("--basis", basis_in, "basis JSON used in the fit")->required();
    evc->add_option("--config", config_path, "model config used in the fit")->required();
    evc->add_option("--samples", samples_csv, "samples CSV from fit")->required();
    evc->add_option("--out", eval_out, "output directory");

    // replicate-study
    auto* repc = app.add_subcommand("replicate-study", "simulate/fit/evaluate replicates");
    std::string basis_mode = "true", study_out = "study";
    int replicates = 5, threads = 0;
    repc->add_option("--scenario", scenario, "scenario name: I or II");
    repc->add_option("--n", n, "number of subjects (0 = published value)");
    repc->add_option("--markers", markers, "restrict scenario I to first K markers");
    repc->add_option("--replicates", replicates, "replicate count");
    repc->add_option("--seed", seed, "base seed")->required();
    repc->add_option("--basis", basis_mode, "true | estimate | truncate:<pve>");
    repc->add_option("--out", study_out, "output directory");
    repc->add_option("--iterations", iterations, "MCMC iterations");
    repc->add_option("--burnin", burnin, "burn-in iterations");
    repc->add_option("--thin", thin, "thinning interval");
    repc->add_option("--threads", threads, "worker threads (0 = hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simc->parsed()) return cmd_simulate(scenario, n, markers, seed, out_dir);
        if (mfc->parsed())
            return cmd_mfpca(surv, lng, basis_out, weights, pve_uni, trim, min_meas,
                             marginal_basis, mean_terms, pve_multi);
        if (fitc->parsed())
            return cmd_fit(surv, lng, basis_in, config_path, fit_out, seed, iterations, burnin,
                           thin);
        if (evc->parsed())
            return cmd_evaluate(surv, lng, scenario_json, basis_in, config_path, samples_csv,
                                eval_out);
        if (repc->parsed()) {
            if (iterations <= 0) iterations = 5500;
            if (burnin < 0) burnin = 500;
            if (thin <= 0) thin = 5;
            return cmd_replicate_study(scenario, n, markers, replicates, seed, basis_mode,
                                       study_out, iterations, burnin, thin, threads);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
