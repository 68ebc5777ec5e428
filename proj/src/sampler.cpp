#include "mfjm/sampler.hpp"

#include <cmath>
#include <sstream>

#include "mfjm/errors.hpp"

namespace mfjm::jm {

int FittedModel::block_index(const std::string& name) const {
    for (int b = 0; b < static_cast<int>(block_names.size()); ++b)
        if (block_names[b] == name) return b;
    throw ConfigError("unknown block '" + name + "' in fitted model");
}

namespace {

// Proposal precision with Cholesky factor; falls back to a ridge when the
// negative Hessian is not positive definite.
struct DenseProposal {
    Eigen::MatrixXd precision;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
    int ridge_steps = 0;

    explicit DenseProposal(Eigen::MatrixXd neg_hessian) : precision(std::move(neg_hessian)) {
        double ridge = 0.0;
        const double base = std::max(1e-12, 1e-10 * precision.diagonal().cwiseAbs().maxCoeff());
        for (;;) {
            llt.compute(precision);
            if (llt.info() == Eigen::Success && precision.diagonal().minCoeff() > 0.0) break;
            ridge = ridge == 0.0 ? base : ridge * 10.0;
            ++ridge_steps;
            if (ridge_steps > 40)
                throw NumericalError("proposal precision not positive definite");
            precision += ridge * Eigen::MatrixXd::Identity(precision.rows(), precision.cols());
        }
        log_det = 0.0;
        for (int j = 0; j < precision.rows(); ++j)
            log_det += 2.0 * std::log(llt.matrixL()(j, j));
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return llt.solve(v); }

    Eigen::VectorXd draw(const Eigen::VectorXd& mean, Rng& rng) const {
        const Eigen::VectorXd z = rng.normal_vector(static_cast<int>(mean.size()));
        return mean + llt.matrixU().solve(z);
    }

    double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const {
        const Eigen::VectorXd d = x - mean;
        return 0.5 * log_det - 0.5 * d.dot(precision * d);
    }
};

struct DiagonalProposal {
    Eigen::VectorXd precision;
    double log_det = 0.0;
    int ridge_steps = 0;

    explicit DiagonalProposal(Eigen::VectorXd neg_hessian) : precision(std::move(neg_hessian)) {
        const double floor = 1e-10;
        for (int i = 0; i < precision.size(); ++i) {
            if (precision(i) <= floor) {
                precision(i) = std::max(floor, 1e-6 * precision.cwiseAbs().maxCoeff());
                ++ridge_steps;
            }
        }
        log_det = precision.array().log().sum();
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
        return v.cwiseQuotient(precision);
    }

    Eigen::VectorXd draw(const Eigen::VectorXd& mean, Rng& rng) const {
        Eigen::VectorXd out(mean.size());
        for (int i = 0; i < mean.size(); ++i)
            out(i) = mean(i) + rng.normal() / std::sqrt(precision(i));
        return out;
    }

    double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const {
        const Eigen::VectorXd d = x - mean;
        return 0.5 * log_det - 0.5 * d.cwiseProduct(precision).dot(d);
    }
};

double newton_step_length(const Block& blk) {
    return (blk.label == Label::Lambda || blk.label == Label::Gamma) ? 0.1 : 1.0;
}

} // namespace

void posterior_mode(JointModelEngine& engine, int max_cycles, double tol) {
    double lp = engine.log_posterior();
    int decreases = 0;
    std::vector<double> trace{lp};
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        for (int b = 0; b < engine.num_blocks(); ++b) {
            const Block& blk = engine.block(b);
            const Eigen::VectorXd s = engine.score(b);
            Eigen::VectorXd step;
            if (engine.hessian_is_diagonal(b)) {
                DiagonalProposal prop(-engine.hessian_diag(b));
                step = prop.solve(s);
            } else {
                DenseProposal prop(-engine.hessian(b));
                step = prop.solve(s);
            }
            engine.set_block(b, engine.block_coefficients(b) + newton_step_length(blk) * step);
        }
        const double lp_new = engine.log_posterior();
        trace.push_back(lp_new);
        decreases = lp_new < lp ? decreases + 1 : 0;
        if (decreases >= 10) {
            std::ostringstream msg;
            msg << "posterior mode search diverged; log-posterior trace:";
            for (double v : trace) msg << ' ' << v;
            throw OptimizationError(msg.str());
        }
        const double rel = std::abs(lp_new - lp) / (std::abs(lp) + 1.0);
        lp = lp_new;
        if (rel < tol) break;
    }
}

double slice_sample(const std::function<double(double)>& log_target, double x0, Rng& rng,
                    double width, int max_steps) {
    const double level = log_target(x0) + std::log(rng.uniform());
    double lo = x0 - width * rng.uniform();
    double hi = lo + width;
    int lo_steps = static_cast<int>(std::floor(max_steps * rng.uniform()));
    int hi_steps = max_steps - 1 - lo_steps;
    while (lo_steps-- > 0 && log_target(lo) > level) lo -= width;
    while (hi_steps-- > 0 && log_target(hi) > level) hi += width;
    for (int it = 0; it < 1000; ++it) {
        const double x1 = rng.uniform(lo, hi);
        if (log_target(x1) > level) return x1;
        (x1 < x0 ? lo : hi) = x1;
    }
    return x0;
}

namespace {

void update_variances(JointModelEngine& engine, Rng& rng) {
    const auto& pr = engine.model().spec.priors;
    for (int b = 0; b < engine.num_blocks(); ++b) {
        const Block& blk = engine.block(b);
        if (!blk.penalized) continue;
        const Eigen::VectorXd& beta = engine.block_coefficients(b);
        const double quad = blk.score_block ? beta.squaredNorm() : beta.dot(blk.penalty * beta);
        if (!pr.half_cauchy_variances) {
            engine.set_tau2(b, rng.inverse_gamma(pr.ig_shape + 0.5 * blk.penalty_rank,
                                                 pr.ig_scale + 0.5 * quad));
        } else {
            const double rank = blk.penalty_rank;
            const double a2 = pr.half_cauchy_scale * pr.half_cauchy_scale;
            const auto log_target = [&](double x) {
                // x = log tau^2; half-Cauchy prior on tau plus Jacobian
                const double tau2 = std::exp(x);
                return -0.5 * rank * x - 0.5 * quad / tau2 -
                       std::log1p(tau2 / a2) + 0.5 * x;
            };
            const double x1 = slice_sample(log_target, std::log(engine.tau2(b)), rng);
            engine.set_tau2(b, std::exp(x1));
        }
    }
}

} // namespace

FittedModel mcmc_sample(JointModelEngine& engine, const ChainConfig& config) {
    Rng rng(config.seed);
    const int nb = engine.num_blocks();

    FittedModel fit;
    fit.model = engine.model_ptr();
    fit.quad = engine.quadrature();
    fit.block_names.resize(nb);
    fit.mode.resize(nb);
    for (int b = 0; b < nb; ++b) {
        fit.block_names[b] = engine.block(b).name;
        fit.mode[b] = engine.block_coefficients(b);
    }

    const int kept = (config.iterations - config.burnin) / config.thin;
    if (kept <= 0) throw ConfigError("chain configuration keeps no samples");
    fit.samples.resize(nb);
    for (int b = 0; b < nb; ++b) fit.samples[b].resize(kept, engine.block(b).dim);
    std::vector<int> tau2_blocks;
    for (int b = 0; b < nb; ++b)
        if (engine.block(b).penalized) {
            tau2_blocks.push_back(b);
            fit.tau2_names.push_back(engine.block(b).name);
        }
    fit.tau2_samples.resize(kept, static_cast<int>(tau2_blocks.size()));
    fit.tau2_mode.resize(static_cast<int>(tau2_blocks.size()));
    for (std::size_t j = 0; j < tau2_blocks.size(); ++j)
        fit.tau2_mode(static_cast<int>(j)) = engine.tau2(tau2_blocks[j]);

    std::vector<long> accepted(nb, 0), proposed(nb, 0);
    std::vector<long> recent_accepted(nb, 0), recent_proposed(nb, 0);

    int kept_idx = 0;
    for (int iter = 0; iter < config.iterations; ++iter) {
        for (int b = 0; b < nb; ++b) {
            const Eigen::VectorXd current = engine.block_coefficients(b);
            const double lp_current = engine.block_local_logpost(b);
            double log_alpha;
            Eigen::VectorXd proposal;
            if (engine.hessian_is_diagonal(b)) {
                DiagonalProposal fwd(-engine.hessian_diag(b));
                fit.ridge_fallbacks += fwd.ridge_steps;
                const Eigen::VectorXd mean_fwd = current + fwd.solve(engine.score(b));
                proposal = fwd.draw(mean_fwd, rng);
                const double logq_fwd = fwd.log_density(proposal, mean_fwd);
                engine.set_block(b, proposal);
                const double lp_prop = engine.block_local_logpost(b);
                DiagonalProposal rev(-engine.hessian_diag(b));
                const Eigen::VectorXd mean_rev = proposal + rev.solve(engine.score(b));
                const double logq_rev = rev.log_density(current, mean_rev);
                log_alpha = (lp_prop - lp_current) + (logq_rev - logq_fwd);
            } else {
                DenseProposal fwd(-engine.hessian(b));
                fit.ridge_fallbacks += fwd.ridge_steps;
                const Eigen::VectorXd mean_fwd = current + fwd.solve(engine.score(b));
                proposal = fwd.draw(mean_fwd, rng);
                const double logq_fwd = fwd.log_density(proposal, mean_fwd);
                engine.set_block(b, proposal);
                const double lp_prop = engine.block_local_logpost(b);
                DenseProposal rev(-engine.hessian(b));
                const Eigen::VectorXd mean_rev = proposal + rev.solve(engine.score(b));
                const double logq_rev = rev.log_density(current, mean_rev);
                log_alpha = (lp_prop - lp_current) + (logq_rev - logq_fwd);
            }
            ++proposed[b];
            ++recent_proposed[b];
            if (std::log(rng.uniform()) < log_alpha) {
                ++accepted[b];
                ++recent_accepted[b];
            } else {
                engine.set_block(b, current);
            }
        }
        update_variances(engine, rng);

        if ((iter + 1) % 500 == 0) {
            engine.refresh_caches();
            for (int b = 0; b < nb; ++b) {
                if (recent_proposed[b] >= 500 &&
                    recent_accepted[b] < 0.01 * recent_proposed[b]) {
                    fit.warnings.push_back("block " + engine.block(b).name +
                                           " acceptance below 1% over the last 500 iterations");
                }
                recent_accepted[b] = 0;
                recent_proposed[b] = 0;
            }
        }

        if (iter >= config.burnin && (iter - config.burnin) % config.thin == 0 &&
            kept_idx < kept) {
            for (int b = 0; b < nb; ++b)
                fit.samples[b].row(kept_idx) = engine.block_coefficients(b);
            for (std::size_t j = 0; j < tau2_blocks.size(); ++j)
                fit.tau2_samples(kept_idx, static_cast<int>(j)) = engine.tau2(tau2_blocks[j]);
            ++kept_idx;
        }
    }
    for (int b = 0; b < nb; ++b) {
        fit.samples[b].conservativeResize(kept_idx, Eigen::NoChange);
        fit.acceptance.push_back(proposed[b] > 0
                                     ? static_cast<double>(accepted[b]) / proposed[b]
                                     : 0.0);
    }
    fit.tau2_samples.conservativeResize(kept_idx, Eigen::NoChange);
    return fit;
}

FittedModel fit_joint_model(JointModelEngine& engine, const ChainConfig& config) {
    engine.initialize_intercepts();
    engine.initialize_variances();
    posterior_mode(engine, config.newton_max_cycles, config.newton_tol);
    return mcmc_sample(engine, config);
}

Eigen::MatrixXd eval_eta_samples(const FittedModel& fit, Label label, int marker,
                                 const std::vector<int>& subjects,
                                 const Eigen::VectorXd& times) {
    const auto& model = *fit.model;
    const int draws = fit.num_samples();
    const auto points = static_cast<int>(subjects.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(draws, points);
    for (int b = 0; b < static_cast<int>(model.blocks.size()); ++b) {
        const Block& blk = model.blocks[b];
        if (blk.score_block) {
            if (label != Label::Mu) continue;
            const int m = blk.component;
            for (int p = 0; p < points; ++p) {
                const double psi = model.spec.basis.eval(marker, m, times(p));
                if (psi == 0.0) continue;
                out.col(p) += psi * fit.samples[b].col(subjects[p]);
            }
            continue;
        }
        if (blk.label != label || blk.marker != marker) continue;
        const Eigen::MatrixXd design = model.block_design(blk, subjects, times);
        out += fit.samples[b] * design.transpose();
    }
    return out;
}

} // namespace mfjm::jm
