#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/quadrature.hpp"
#include "mfjm/terms.hpp"

namespace mfjm::jm {

// Holds the full sampler state for one model: per-block coefficients and
// variance parameters, cached design matrices at observation, event and
// quadrature times, and incrementally maintained predictor values. Scores
// and Hessians are the blockwise log-posterior derivatives used both by the
// Newton mode search and the Taylor-proposal MCMC.
class JointModelEngine {
public:
    JointModelEngine(std::shared_ptr<const CompiledModel> model, QuadratureRule quad = {});

    const CompiledModel& model() const { return *model_; }
    std::shared_ptr<const CompiledModel> model_ptr() const { return model_; }
    const QuadratureRule& quadrature() const { return quad_; }

    int num_blocks() const { return static_cast<int>(model_->blocks.size()); }
    const Block& block(int b) const { return model_->blocks[b]; }

    const Eigen::VectorXd& block_coefficients(int b) const { return beta_[b]; }
    void set_block(int b, const Eigen::VectorXd& beta);
    double tau2(int b) const { return tau2_[b]; }
    void set_tau2(int b, double value) { tau2_[b] = value; }

    // Recomputes all cached predictors from the coefficients (drift hygiene).
    void refresh_caches();

    double survival_loglik() const;
    double longitudinal_loglik() const;
    double longitudinal_loglik(int marker) const;
    double log_likelihood() const { return survival_loglik() + longitudinal_loglik(); }
    double log_prior(int b) const;
    double log_posterior() const;

    // The part of the log posterior that depends on block b (submodel
    // log-likelihoods it touches plus its own prior).
    double block_local_logpost(int b) const;

    Eigen::VectorXd score(int b) const;
    bool hessian_is_diagonal(int b) const { return block(b).score_block; }
    Eigen::MatrixXd hessian(int b) const;
    Eigen::VectorXd hessian_diag(int b) const;

    // Gauss-Legendre cumulative hazard for one subject at an arbitrary upper
    // limit, evaluated from the current state (general, uncached path).
    double cum_hazard(int subject, double upper) const;
    double cum_hazard(int subject, double upper, const QuadratureRule& rule) const;

    // Predictor value at an arbitrary (subject, time); for Mu the MFPC
    // random effect is included.
    double eta_at(Label label, int marker, int subject, double t) const;

    void initialize_intercepts();
    void initialize_variances();

    // Cached designs (exposed for tests and samplers).
    const Eigen::MatrixXd& block_design_long(int b) const { return designs_[b].x_long; }
    const Eigen::MatrixXd& block_design_event(int b) const { return designs_[b].x_event; }
    const Eigen::MatrixXd& block_design_quad(int b) const { return designs_[b].x_quad; }
    const Eigen::VectorXd& marker_values(int k) const { return y_[k]; }
    const std::vector<int>& marker_row_subject(int k) const { return obs_subject_[k]; }
    const Eigen::VectorXd& marker_eta_mu(int k) const { return eta_mu_[k]; }
    const Eigen::VectorXd& marker_eta_sigma(int k) const { return eta_sigma_[k]; }
    const Eigen::MatrixXd& psi_long(int k) const { return psi_long_[k]; }

private:
    struct BlockDesigns {
        Eigen::MatrixXd x_long;  // label's longitudinal rows (mu/sigma)
        Eigen::MatrixXd x_event; // n rows (survival labels and mu)
        Eigen::MatrixXd x_quad;  // n*Q rows (lambda/alpha/mu)
    };

    void build_caches();
    void ensure_survival_workspace() const;
    void ensure_longitudinal_workspace(int k) const;
    void apply_block_delta(int b, const Eigen::VectorXd& delta);
    bool touches_survival(int b) const;

    std::shared_ptr<const CompiledModel> model_;
    QuadratureRule quad_;
    int n_ = 0, k_count_ = 0, m_count_ = 0, nq_ = 0;

    // immutable caches
    std::vector<BlockDesigns> designs_;
    std::vector<Eigen::VectorXd> y_;
    std::vector<std::vector<int>> obs_subject_;
    std::vector<Eigen::VectorXd> obs_time_;
    std::vector<Eigen::MatrixXd> psi_long_, psi_event_, psi_quad_;
    Eigen::VectorXd delta_;       // event indicators
    std::vector<int> quad_subject_;
    Eigen::VectorXd quad_weight_, quad_time_;

    // state
    std::vector<Eigen::VectorXd> beta_;
    std::vector<double> tau2_;

    // cached predictors
    std::vector<Eigen::VectorXd> eta_mu_, eta_sigma_;              // longitudinal rows
    std::vector<Eigen::VectorXd> eta_mu_event_, eta_mu_quad_;      // per marker
    std::vector<Eigen::VectorXd> eta_alpha_event_, eta_alpha_quad_;
    Eigen::VectorXd eta_lambda_event_, eta_lambda_quad_, eta_gamma_;

    // lazy workspaces
    mutable bool surv_valid_ = false;
    mutable Eigen::VectorXd w_all_;      // nQ: quad weight * hazard at node
    mutable Eigen::VectorXd lambda_sub_; // n: cumulative hazards
    mutable std::vector<bool> long_valid_;
    mutable std::vector<Eigen::VectorXd> resid_, rinv_;
};

} // namespace mfjm::jm
