#include "mfjm/study.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::study {

jm::ModelSpec study_model_spec(const sim::SimScenario& scenario,
                               const fpca::MfpcBasis& basis) {
    jm::ModelSpec spec;
    spline::SplineBasisDef baseline{3, 20, 0.0, scenario.t_max, 3};
    spec.lambda = {jm::TermSpec::smooth_time(baseline)};
    spec.gamma = {jm::TermSpec::intercept(), jm::TermSpec::linear("x")};
    const int k_count = scenario.num_markers;
    spec.alpha.assign(k_count, {jm::TermSpec::intercept()});
    spec.sigma.assign(k_count, {jm::TermSpec::intercept()});
    spec.mu.assign(k_count,
                   {jm::TermSpec::intercept(), jm::TermSpec::linear_time(),
                    jm::TermSpec::linear("x"), jm::TermSpec::time_interaction("x"),
                    jm::TermSpec::mfpc()});
    spec.basis = basis;
    return spec;
}

namespace {

struct ObservedPoints {
    std::vector<int> subjects;
    Eigen::VectorXd times;
};

ObservedPoints marker_points(const LongSurvDataset& data, int marker) {
    ObservedPoints out;
    std::vector<double> times;
    for (int i = 0; i < data.num_subjects(); ++i)
        for (const auto& obs : data.subjects[i].marker_obs[marker]) {
            out.subjects.push_back(i);
            times.push_back(obs.time);
        }
    out.times = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<long>(times.size()));
    return out;
}

ObservedPoints event_points(const LongSurvDataset& data) {
    ObservedPoints out;
    out.subjects.resize(data.num_subjects());
    out.times.resize(data.num_subjects());
    for (int i = 0; i < data.num_subjects(); ++i) {
        out.subjects[i] = i;
        out.times(i) = data.subjects[i].follow_up;
    }
    return out;
}

metrics::TimeResolvedMetrics time_resolved_metrics(
    const sim::SimulatedData& simdata, const jm::FittedModel& fit,
    const std::function<double(int, double)>& truth_at,
    const std::function<Eigen::MatrixXd(const std::vector<int>&, const Eigen::VectorXd&)>& eval,
    bool survival_sign) {
    const auto& data = simdata.data;
    const Eigen::VectorXd grid = simdata.scenario.grid();
    metrics::TimeResolvedMetrics out;
    out.grid = grid;
    out.bias = Eigen::VectorXd::Zero(grid.size());
    out.rmse = Eigen::VectorXd::Zero(grid.size());
    out.coverage = Eigen::VectorXd::Zero(grid.size());
    out.n_risk = Eigen::VectorXd::Zero(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        std::vector<int> risk;
        for (int i = 0; i < data.num_subjects(); ++i)
            if (data.subjects[i].follow_up >= grid(g)) risk.push_back(i);
        out.n_risk(g) = static_cast<double>(risk.size());
        if (risk.empty()) continue;
        Eigen::VectorXd truth(risk.size());
        Eigen::VectorXd times = Eigen::VectorXd::Constant(static_cast<long>(risk.size()), grid(g));
        for (std::size_t r = 0; r < risk.size(); ++r)
            truth(static_cast<long>(r)) = truth_at(risk[r], grid(g));
        const Eigen::MatrixXd samples = eval(risk, times);
        const auto m = survival_sign ? metrics::survival_metrics(truth, samples)
                                     : metrics::longitudinal_metrics(truth, samples);
        out.bias(g) = m.bias;
        out.rmse(g) = m.rmse;
        out.coverage(g) = m.coverage;
    }
    return out;
}

} // namespace

metrics::EvalReport evaluate_fit(const sim::SimulatedData& simdata, const jm::FittedModel& fit,
                                 bool time_resolved) {
    const auto& data = simdata.data;
    const int k_count = data.num_markers();
    metrics::EvalReport report;

    const auto events = event_points(data);
    // lambda + gamma jointly at the follow-up times
    {
        Eigen::VectorXd truth(data.num_subjects());
        for (int i = 0; i < data.num_subjects(); ++i)
            truth(i) = simdata.eta_lambda(events.times(i)) + simdata.eta_gamma(i);
        const Eigen::MatrixXd samples =
            eval_eta_samples(fit, jm::Label::Lambda, -1, events.subjects, events.times) +
            eval_eta_samples(fit, jm::Label::Gamma, -1, events.subjects, events.times);
        report.predictor["lambda+gamma"] = metrics::survival_metrics(truth, samples);
        if (time_resolved)
            report.time_resolved["lambda+gamma"] = time_resolved_metrics(
                simdata, fit,
                [&](int i, double t) { return simdata.eta_lambda(t) + simdata.eta_gamma(i); },
                [&](const std::vector<int>& subj, const Eigen::VectorXd& times) {
                    return eval_eta_samples(fit, jm::Label::Lambda, -1, subj, times) +
                           eval_eta_samples(fit, jm::Label::Gamma, -1, subj, times);
                },
                true);
    }
    for (int k = 0; k < k_count; ++k) {
        const std::string suffix = std::to_string(k + 1);
        // alpha_k at the follow-up times
        {
            const Eigen::VectorXd truth =
                Eigen::VectorXd::Constant(data.num_subjects(), simdata.alpha(k));
            const Eigen::MatrixXd samples =
                eval_eta_samples(fit, jm::Label::Alpha, k, events.subjects, events.times);
            report.predictor["alpha" + suffix] = metrics::survival_metrics(truth, samples);
        }
        // mu_k and sigma_k at the observed (i, j) pairs
        const auto points = marker_points(data, k);
        if (points.subjects.empty()) continue;
        {
            Eigen::VectorXd truth(points.times.size());
            for (long r = 0; r < points.times.size(); ++r)
                truth(r) = simdata.eta_mu(points.subjects[static_cast<std::size_t>(r)], k,
                                          points.times(r));
            const Eigen::MatrixXd samples =
                eval_eta_samples(fit, jm::Label::Mu, k, points.subjects, points.times);
            report.predictor["mu" + suffix] = metrics::longitudinal_metrics(truth, samples);
            if (time_resolved)
                report.time_resolved["mu" + suffix] = time_resolved_metrics(
                    simdata, fit,
                    [&](int i, double t) { return simdata.eta_mu(i, k, t); },
                    [&](const std::vector<int>& subj, const Eigen::VectorXd& times) {
                        return eval_eta_samples(fit, jm::Label::Mu, k, subj, times);
                    },
                    false);
        }
        {
            const Eigen::VectorXd truth =
                Eigen::VectorXd::Constant(points.times.size(), simdata.log_sigma());
            const Eigen::MatrixXd samples =
                eval_eta_samples(fit, jm::Label::Sigma, k, points.subjects, points.times);
            report.predictor["sigma" + suffix] = metrics::longitudinal_metrics(truth, samples);
        }
    }
    return report;
}

ReplicateResult run_replicate(const StudyConfig& config, int rep_index) {
    const std::uint64_t sim_seed = config.base_seed + static_cast<std::uint64_t>(rep_index);
    const auto simdata = sim::simulate(config.scenario, sim_seed);

    fpca::MfpcBasis basis;
    bool estimated = false;
    if (config.basis_mode == BasisMode::True) {
        basis = sim::true_basis(config.scenario, config.model_grid_size);
    } else {
        std::vector<std::vector<jm::TermSpec>> mean_terms(
            config.scenario.num_markers,
            {jm::TermSpec::intercept(), jm::TermSpec::linear_time(), jm::TermSpec::linear("x"),
             jm::TermSpec::time_interaction("x")});
        auto opts = config.mfpca;
        opts.ufpca.grid_size = config.model_grid_size;
        basis = fpca::estimate_mfpc_basis(simdata.data, mean_terms, opts);
        if (config.basis_mode == BasisMode::Truncate)
            basis = fpca::truncate_basis(basis, config.truncate_pve);
        estimated = true;
    }

    auto spec = study_model_spec(config.scenario, basis);
    auto model = jm::compile_model(spec, simdata.data);
    jm::JointModelEngine engine(model, config.quad);
    auto chain = config.chain;
    chain.seed = config.base_seed * 1000003ULL + static_cast<std::uint64_t>(rep_index) + 1;
    const auto fit = jm::fit_joint_model(engine, chain);

    ReplicateResult result;
    result.report = evaluate_fit(simdata, fit, config.time_resolved);
    result.report.replicates = 1;
    result.acceptance = fit.acceptance;
    result.basis_components = basis.truncation;
    if (estimated) {
        const auto truth = sim::true_basis(config.scenario, config.model_grid_size);
        result.report.mfpc_errors = metrics::mfpc_error(truth, basis);
    }

    const int k_count = config.scenario.num_markers;
    result.alpha_mean.resize(k_count);
    result.alpha_lo.resize(k_count);
    result.alpha_hi.resize(k_count);
    for (int k = 0; k < k_count; ++k) {
        const std::vector<int> one_subject{0};
        const Eigen::VectorXd one_time = Eigen::VectorXd::Constant(1, simdata.data.t_max * 0.5);
        const Eigen::MatrixXd samples =
            eval_eta_samples(fit, jm::Label::Alpha, k, one_subject, one_time);
        std::vector<double> draws(samples.rows());
        for (int i = 0; i < samples.rows(); ++i) draws[static_cast<std::size_t>(i)] = samples(i, 0);
        result.alpha_mean(k) = samples.col(0).mean();
        result.alpha_lo(k) = quantile_type7(draws, 0.025);
        result.alpha_hi(k) = quantile_type7(draws, 0.975);
    }
    return result;
}

std::vector<ReplicateResult> run_study(const StudyConfig& config) {
    std::vector<ReplicateResult> results(config.replicates);
    const int workers = config.threads > 0
                            ? config.threads
                            : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            try {
                for (;;) {
                    const int rep = next.fetch_add(1);
                    if (rep >= config.replicates) break;
                    results[static_cast<std::size_t>(rep)] = run_replicate(config, rep);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

} // namespace mfjm::study
