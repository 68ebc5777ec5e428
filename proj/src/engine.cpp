#include "mfjm/engine.hpp"

#include <cmath>
#include <numbers>

#include "mfjm/errors.hpp"

namespace mfjm::jm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

JointModelEngine::JointModelEngine(std::shared_ptr<const CompiledModel> model,
                                   QuadratureRule quad)
    : model_(std::move(model)), quad_(quad) {
    n_ = model_->data.num_subjects();
    k_count_ = model_->data.num_markers();
    m_count_ = model_->num_components;
    nq_ = n_ * quad_.points_per_subject();
    build_caches();
}

void JointModelEngine::build_caches() {
    const auto& data = model_->data;
    const auto& basis = model_->spec.basis;

    delta_.resize(n_);
    for (int i = 0; i < n_; ++i) delta_(i) = data.subjects[i].event;

    // Quadrature layout: consecutive rows per subject.
    quad_subject_.resize(nq_);
    quad_weight_.resize(nq_);
    quad_time_.resize(nq_);
    const int q_per = quad_.points_per_subject();
    Eigen::VectorXd s, w;
    for (int i = 0; i < n_; ++i) {
        quad_.nodes(data.subjects[i].follow_up, s, w);
        for (int j = 0; j < q_per; ++j) {
            quad_subject_[i * q_per + j] = i;
            quad_weight_(i * q_per + j) = w(j);
            quad_time_(i * q_per + j) = s(j);
        }
    }

    // Longitudinal rows per marker.
    y_.resize(k_count_);
    obs_subject_.resize(k_count_);
    obs_time_.resize(k_count_);
    psi_long_.resize(k_count_);
    psi_event_.resize(k_count_);
    psi_quad_.resize(k_count_);
    for (int k = 0; k < k_count_; ++k) {
        std::vector<double> yv, tv;
        for (int i = 0; i < n_; ++i)
            for (const auto& obs : data.subjects[i].marker_obs[k]) {
                obs_subject_[k].push_back(i);
                yv.push_back(obs.value);
                tv.push_back(obs.time);
            }
        const long nk = static_cast<long>(yv.size());
        y_[k] = Eigen::Map<Eigen::VectorXd>(yv.data(), nk);
        obs_time_[k] = Eigen::Map<Eigen::VectorXd>(tv.data(), nk);

        psi_long_[k].resize(nk, m_count_);
        for (long r = 0; r < nk; ++r)
            psi_long_[k].row(r) = basis.eval_row(k, obs_time_[k](r));
        psi_event_[k].resize(n_, m_count_);
        for (int i = 0; i < n_; ++i)
            psi_event_[k].row(i) = basis.eval_row(k, data.subjects[i].follow_up);
        psi_quad_[k].resize(nq_, m_count_);
        for (int q = 0; q < nq_; ++q)
            psi_quad_[k].row(q) = basis.eval_row(k, quad_time_(q));
    }

    // Block designs.
    const int nb = num_blocks();
    designs_.resize(nb);
    beta_.assign(nb, Eigen::VectorXd());
    tau2_.assign(nb, 1.0);
    std::vector<int> all_subjects(n_);
    Eigen::VectorXd event_times(n_);
    for (int i = 0; i < n_; ++i) {
        all_subjects[i] = i;
        event_times(i) = data.subjects[i].follow_up;
    }
    std::vector<int> quad_subj_vec(quad_subject_.begin(), quad_subject_.end());

    for (int b = 0; b < nb; ++b) {
        const Block& blk = model_->blocks[b];
        beta_[b] = Eigen::VectorXd::Zero(blk.dim);
        if (blk.score_block) continue;
        auto& d = designs_[b];
        switch (blk.label) {
            case Label::Lambda:
                d.x_event = model_->block_design(blk, all_subjects, event_times);
                d.x_quad = model_->block_design(blk, quad_subj_vec, quad_time_);
                break;
            case Label::Gamma:
                d.x_event = model_->block_design(blk, all_subjects,
                                                 Eigen::VectorXd::Zero(n_));
                break;
            case Label::Alpha:
                d.x_event = model_->block_design(blk, all_subjects, event_times);
                d.x_quad = model_->block_design(blk, quad_subj_vec, quad_time_);
                break;
            case Label::Mu: {
                const int k = blk.marker;
                d.x_long = model_->block_design(blk, obs_subject_[k], obs_time_[k]);
                d.x_event = model_->block_design(blk, all_subjects, event_times);
                d.x_quad = model_->block_design(blk, quad_subj_vec, quad_time_);
                break;
            }
            case Label::Sigma: {
                const int k = blk.marker;
                d.x_long = model_->block_design(blk, obs_subject_[k], obs_time_[k]);
                break;
            }
        }
    }

    long_valid_.assign(k_count_, false);
    resid_.resize(k_count_);
    rinv_.resize(k_count_);
    refresh_caches();
}

void JointModelEngine::refresh_caches() {
    eta_mu_.assign(k_count_, Eigen::VectorXd());
    eta_sigma_.assign(k_count_, Eigen::VectorXd());
    eta_mu_event_.assign(k_count_, Eigen::VectorXd::Zero(n_));
    eta_mu_quad_.assign(k_count_, Eigen::VectorXd::Zero(nq_));
    eta_alpha_event_.assign(k_count_, Eigen::VectorXd::Zero(n_));
    eta_alpha_quad_.assign(k_count_, Eigen::VectorXd::Zero(nq_));
    eta_lambda_event_ = Eigen::VectorXd::Zero(n_);
    eta_lambda_quad_ = Eigen::VectorXd::Zero(nq_);
    eta_gamma_ = Eigen::VectorXd::Zero(n_);
    for (int k = 0; k < k_count_; ++k) {
        eta_mu_[k] = Eigen::VectorXd::Zero(y_[k].size());
        eta_sigma_[k] = Eigen::VectorXd::Zero(y_[k].size());
    }
    for (int b = 0; b < num_blocks(); ++b) {
        if (beta_[b].size() == 0 || beta_[b].isZero(0.0)) continue;
        apply_block_delta(b, beta_[b]);
    }
    surv_valid_ = false;
    std::fill(long_valid_.begin(), long_valid_.end(), false);
}

bool JointModelEngine::touches_survival(int b) const {
    const Block& blk = block(b);
    return blk.label != Label::Sigma;
}

void JointModelEngine::apply_block_delta(int b, const Eigen::VectorXd& delta) {
    const Block& blk = block(b);
    const auto& d = designs_[b];
    if (blk.score_block) {
        const int m = blk.component;
        for (int k = 0; k < k_count_; ++k) {
            auto& rows = obs_subject_[k];
            for (long r = 0; r < eta_mu_[k].size(); ++r)
                eta_mu_[k](r) += psi_long_[k](r, m) * delta(rows[r]);
            eta_mu_event_[k] += psi_event_[k].col(m).cwiseProduct(delta);
            for (int q = 0; q < nq_; ++q)
                eta_mu_quad_[k](q) += psi_quad_[k](q, m) * delta(quad_subject_[q]);
        }
        return;
    }
    switch (blk.label) {
        case Label::Lambda:
            eta_lambda_event_ += d.x_event * delta;
            eta_lambda_quad_ += d.x_quad * delta;
            break;
        case Label::Gamma:
            eta_gamma_ += d.x_event * delta;
            break;
        case Label::Alpha:
            eta_alpha_event_[blk.marker] += d.x_event * delta;
            eta_alpha_quad_[blk.marker] += d.x_quad * delta;
            break;
        case Label::Mu:
            eta_mu_[blk.marker] += d.x_long * delta;
            eta_mu_event_[blk.marker] += d.x_event * delta;
            eta_mu_quad_[blk.marker] += d.x_quad * delta;
            break;
        case Label::Sigma:
            eta_sigma_[blk.marker] += d.x_long * delta;
            break;
    }
}

void JointModelEngine::set_block(int b, const Eigen::VectorXd& beta) {
    if (beta.size() != block(b).dim)
        throw ConfigError("set_block: dimension mismatch for block " + block(b).name);
    if (!beta.allFinite())
        throw NumericalError("non-finite coefficients for block " + block(b).name);
    const Eigen::VectorXd delta = beta - beta_[b];
    beta_[b] = beta;
    apply_block_delta(b, delta);
    if (touches_survival(b)) surv_valid_ = false;
    const Block& blk = block(b);
    if (blk.score_block)
        std::fill(long_valid_.begin(), long_valid_.end(), false);
    else if (blk.label == Label::Mu || blk.label == Label::Sigma)
        long_valid_[blk.marker] = false;
}

void JointModelEngine::ensure_survival_workspace() const {
    if (surv_valid_) return;
    Eigen::VectorXd log_h = eta_lambda_quad_;
    for (int k = 0; k < k_count_; ++k)
        log_h += eta_alpha_quad_[k].cwiseProduct(eta_mu_quad_[k]);
    for (int q = 0; q < nq_; ++q) log_h(q) += eta_gamma_(quad_subject_[q]);
    if (log_h.maxCoeff() > 500.0)
        throw NumericalError("hazard overflow in survival predictor");
    w_all_ = quad_weight_.cwiseProduct(log_h.array().exp().matrix());
    lambda_sub_ = Eigen::VectorXd::Zero(n_);
    for (int q = 0; q < nq_; ++q) lambda_sub_(quad_subject_[q]) += w_all_(q);
    surv_valid_ = true;
}

void JointModelEngine::ensure_longitudinal_workspace(int k) const {
    if (long_valid_[k]) return;
    resid_[k] = y_[k] - eta_mu_[k];
    rinv_[k] = (-2.0 * eta_sigma_[k].array()).exp();
    long_valid_[k] = true;
}

double JointModelEngine::survival_loglik() const {
    ensure_survival_workspace();
    Eigen::VectorXd eta_event = eta_lambda_event_ + eta_gamma_;
    for (int k = 0; k < k_count_; ++k)
        eta_event += eta_alpha_event_[k].cwiseProduct(eta_mu_event_[k]);
    return delta_.dot(eta_event) - lambda_sub_.sum();
}

double JointModelEngine::longitudinal_loglik(int k) const {
    ensure_longitudinal_workspace(k);
    const double nk = static_cast<double>(y_[k].size());
    return -0.5 * nk * kLog2Pi - eta_sigma_[k].sum() -
           0.5 * resid_[k].cwiseProduct(rinv_[k]).dot(resid_[k]);
}

double JointModelEngine::longitudinal_loglik() const {
    double total = 0.0;
    for (int k = 0; k < k_count_; ++k) total += longitudinal_loglik(k);
    return total;
}

double JointModelEngine::log_prior(int b) const {
    const Block& blk = block(b);
    const auto& beta = beta_[b];
    if (blk.score_block)
        return -0.5 * beta.squaredNorm() / tau2_[b] -
               0.5 * blk.penalty_rank * std::log(tau2_[b]);
    if (blk.penalized)
        return -0.5 * beta.dot(blk.penalty * beta) / tau2_[b] -
               0.5 * blk.penalty_rank * std::log(tau2_[b]);
    const double sd = model_->spec.priors.fixed_sd;
    return -0.5 * beta.squaredNorm() / (sd * sd);
}

double JointModelEngine::log_posterior() const {
    double lp = log_likelihood();
    const auto& pr = model_->spec.priors;
    for (int b = 0; b < num_blocks(); ++b) {
        lp += log_prior(b);
        if (block(b).penalized) {
            // inverse-gamma hyperprior on tau^2
            lp += -(pr.ig_shape + 1.0) * std::log(tau2_[b]) - pr.ig_scale / tau2_[b];
        }
    }
    return lp;
}

double JointModelEngine::block_local_logpost(int b) const {
    const Block& blk = block(b);
    double lp = log_prior(b);
    if (touches_survival(b)) lp += survival_loglik();
    if (blk.score_block)
        lp += longitudinal_loglik();
    else if (blk.label == Label::Mu || blk.label == Label::Sigma)
        lp += longitudinal_loglik(blk.marker);
    return lp;
}

Eigen::VectorXd JointModelEngine::score(int b) const {
    const Block& blk = block(b);
    const auto& d = designs_[b];
    Eigen::VectorXd s = Eigen::VectorXd::Zero(blk.dim);

    if (blk.score_block) {
        const int m = blk.component;
        ensure_survival_workspace();
        for (int k = 0; k < k_count_; ++k) {
            ensure_longitudinal_workspace(k);
            const auto& rows = obs_subject_[k];
            for (long r = 0; r < resid_[k].size(); ++r)
                s(rows[r]) += psi_long_[k](r, m) * rinv_[k](r) * resid_[k](r);
            s += delta_.cwiseProduct(eta_alpha_event_[k]).cwiseProduct(psi_event_[k].col(m));
        }
        for (int q = 0; q < nq_; ++q) {
            double g = 0.0;
            for (int k = 0; k < k_count_; ++k)
                g += eta_alpha_quad_[k](q) * psi_quad_[k](q, m);
            s(quad_subject_[q]) -= w_all_(q) * g;
        }
        s -= beta_[b] / tau2_[b];
        return s;
    }

    switch (blk.label) {
        case Label::Lambda:
            ensure_survival_workspace();
            s = d.x_event.transpose() * delta_ - d.x_quad.transpose() * w_all_;
            break;
        case Label::Gamma:
            ensure_survival_workspace();
            s = d.x_event.transpose() * (delta_ - lambda_sub_);
            break;
        case Label::Alpha: {
            ensure_survival_workspace();
            const int k = blk.marker;
            s = d.x_event.transpose() * delta_.cwiseProduct(eta_mu_event_[k]) -
                d.x_quad.transpose() * w_all_.cwiseProduct(eta_mu_quad_[k]);
            break;
        }
        case Label::Mu: {
            ensure_survival_workspace();
            const int k = blk.marker;
            ensure_longitudinal_workspace(k);
            s = d.x_long.transpose() * rinv_[k].cwiseProduct(resid_[k]) +
                d.x_event.transpose() * delta_.cwiseProduct(eta_alpha_event_[k]) -
                d.x_quad.transpose() * w_all_.cwiseProduct(eta_alpha_quad_[k]);
            break;
        }
        case Label::Sigma: {
            const int k = blk.marker;
            ensure_longitudinal_workspace(k);
            const Eigen::VectorXd g =
                resid_[k].array().square() * rinv_[k].array() - 1.0;
            s = d.x_long.transpose() * g;
            break;
        }
    }
    if (blk.penalized)
        s -= blk.penalty * beta_[b] / tau2_[b];
    else {
        const double sd = model_->spec.priors.fixed_sd;
        s -= beta_[b] / (sd * sd);
    }
    return s;
}

Eigen::MatrixXd JointModelEngine::hessian(int b) const {
    const Block& blk = block(b);
    if (blk.score_block)
        throw ConfigError("score blocks have diagonal Hessians; use hessian_diag");
    const auto& d = designs_[b];
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(blk.dim, blk.dim);

    switch (blk.label) {
        case Label::Lambda:
            ensure_survival_workspace();
            h = -(d.x_quad.transpose() * w_all_.asDiagonal() * d.x_quad);
            break;
        case Label::Gamma:
            ensure_survival_workspace();
            h = -(d.x_event.transpose() * lambda_sub_.asDiagonal() * d.x_event);
            break;
        case Label::Alpha: {
            ensure_survival_workspace();
            const int k = blk.marker;
            const Eigen::VectorXd w =
                w_all_.array() * eta_mu_quad_[k].array().square();
            h = -(d.x_quad.transpose() * w.asDiagonal() * d.x_quad);
            break;
        }
        case Label::Mu: {
            ensure_survival_workspace();
            const int k = blk.marker;
            ensure_longitudinal_workspace(k);
            const Eigen::VectorXd w =
                w_all_.array() * eta_alpha_quad_[k].array().square();
            h = -(d.x_long.transpose() * rinv_[k].asDiagonal() * d.x_long) -
                d.x_quad.transpose() * w.asDiagonal() * d.x_quad;
            break;
        }
        case Label::Sigma: {
            const int k = blk.marker;
            ensure_longitudinal_workspace(k);
            const Eigen::VectorXd w =
                2.0 * resid_[k].array().square() * rinv_[k].array();
            h = -(d.x_long.transpose() * w.asDiagonal() * d.x_long);
            break;
        }
    }
    if (blk.penalized)
        h -= blk.penalty / tau2_[b];
    else {
        const double sd = model_->spec.priors.fixed_sd;
        h -= Eigen::MatrixXd::Identity(blk.dim, blk.dim) / (sd * sd);
    }
    return h;
}

Eigen::VectorXd JointModelEngine::hessian_diag(int b) const {
    const Block& blk = block(b);
    if (!blk.score_block) throw ConfigError("hessian_diag is only for score blocks");
    const int m = blk.component;
    ensure_survival_workspace();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(n_);
    for (int k = 0; k < k_count_; ++k) {
        ensure_longitudinal_workspace(k);
        const auto& rows = obs_subject_[k];
        for (long r = 0; r < rinv_[k].size(); ++r)
            h(rows[r]) -= psi_long_[k](r, m) * psi_long_[k](r, m) * rinv_[k](r);
    }
    for (int q = 0; q < nq_; ++q) {
        double g = 0.0;
        for (int k = 0; k < k_count_; ++k)
            g += eta_alpha_quad_[k](q) * psi_quad_[k](q, m);
        h(quad_subject_[q]) -= w_all_(q) * g * g;
    }
    h.array() -= 1.0 / tau2_[b];
    return h;
}

double JointModelEngine::eta_at(Label label, int marker, int subject, double t) const {
    double value = 0.0;
    const auto& terms = model_->terms_for(label, marker);
    for (int b = 0; b < num_blocks(); ++b) {
        const Block& blk = block(b);
        if (blk.score_block) {
            if (label == Label::Mu) {
                value += model_->spec.basis.eval(marker, blk.component, t) *
                         beta_[b](subject);
            }
            continue;
        }
        if (blk.label != label || blk.marker != marker) continue;
        std::vector<double> buf(blk.dim);
        for (std::size_t q = 0; q < blk.term_indices.size(); ++q)
            terms[blk.term_indices[q]].eval_row(model_->data, subject, t,
                                                buf.data() + blk.term_offsets[q]);
        for (int j = 0; j < blk.dim; ++j) value += buf[j] * beta_[b](j);
    }
    return value;
}

double JointModelEngine::cum_hazard(int subject, double upper) const {
    return cum_hazard(subject, upper, quad_);
}

double JointModelEngine::cum_hazard(int subject, double upper,
                                    const QuadratureRule& rule) const {
    if (!(upper > 0.0) || upper > model_->data.t_max + 1e-12)
        throw DomainError("cum_hazard upper limit outside (0, t_max]");
    Eigen::VectorXd s, w;
    rule.nodes(upper, s, w);
    const double eg = eta_at(Label::Gamma, -1, subject, 0.0);
    double total = 0.0;
    for (int j = 0; j < s.size(); ++j) {
        double log_h = eta_at(Label::Lambda, -1, subject, s(j)) + eg;
        for (int k = 0; k < k_count_; ++k)
            log_h += eta_at(Label::Alpha, k, subject, s(j)) *
                     eta_at(Label::Mu, k, subject, s(j));
        total += w(j) * std::exp(log_h);
    }
    return total;
}

void JointModelEngine::initialize_intercepts() {
    const auto& data = model_->data;
    for (int b = 0; b < num_blocks(); ++b) {
        const Block& blk = block(b);
        if (blk.score_block) continue;
        const auto& terms = model_->terms_for(blk.label, blk.marker);
        for (std::size_t q = 0; q < blk.term_indices.size(); ++q) {
            if (terms[blk.term_indices[q]].spec.kind != TermKind::Intercept) continue;
            const int col = blk.term_offsets[q];
            Eigen::VectorXd beta = beta_[b];
            if (blk.label == Label::Mu && y_[blk.marker].size() > 0) {
                beta(col) = y_[blk.marker].mean();
            } else if (blk.label == Label::Sigma && y_[blk.marker].size() > 1) {
                const double sd = std::sqrt(
                    (y_[blk.marker].array() - y_[blk.marker].mean()).square().sum() /
                    (static_cast<double>(y_[blk.marker].size()) - 1.0));
                beta(col) = std::log(std::max(sd, 1e-4));
            } else if (blk.label == Label::Gamma) {
                double total_time = 0.0;
                for (const auto& s : data.subjects) total_time += s.follow_up;
                const double events = delta_.sum();
                beta(col) = std::log(std::max(events, 0.5) / total_time);
            }
            set_block(b, beta);
        }
    }
}

void JointModelEngine::initialize_variances() {
    for (int b = 0; b < num_blocks(); ++b) {
        const Block& blk = block(b);
        if (!blk.penalized) continue;
        if (blk.score_block) {
            // score variances start at the basis eigenvalues
            set_tau2(b, std::max(model_->spec.basis.eigenvalues(blk.component), 1e-6));
            continue;
        }
        // bisection so the empirical degrees of freedom are comparable
        const auto& d = designs_[b];
        const Eigen::MatrixXd& x =
            (blk.label == Label::Mu || blk.label == Label::Sigma) ? d.x_long : d.x_event;
        const Eigen::MatrixXd xtx = x.transpose() * x;
        const double target = std::min(5.0, 0.5 * blk.dim);
        const auto edf = [&](double log_tau2) {
            const Eigen::MatrixXd a = xtx + blk.penalty / std::exp(log_tau2);
            return (a.ldlt().solve(xtx)).trace();
        };
        double lo = -12.0, hi = 12.0;
        if (edf(lo) >= target) {
            set_tau2(b, std::exp(lo));
            continue;
        }
        if (edf(hi) <= target) {
            set_tau2(b, std::exp(hi));
            continue;
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (edf(mid) < target ? lo : hi) = mid;
        }
        set_tau2(b, std::exp(0.5 * (lo + hi)));
    }
}

} // namespace mfjm::jm
