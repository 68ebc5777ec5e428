#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/dataset.hpp"
#include "mfjm/mfpc.hpp"
#include "mfjm/rng.hpp"

namespace mfjm::sim {

struct FixedEffectsConfig {
    double intercept = 0.0;
    double time = 0.0;
    double covariate = 0.0;
    double interaction = 0.0;

    double eval(double t, double x) const {
        return intercept + time * t + covariate * x + interaction * t * x;
    }
};

// Subject-level random trajectories b_i^{(k)}(t) = sum_j c_ij B_j^{(k)}(t).
// Coefficients are drawn either from an unstructured covariance over raw
// basis functions (random intercept/slope) or as independent scores over the
// eigenbasis of a constructed kernel.
struct RandomProcess {
    enum class Kind { CoefficientCovariance, KlScores };
    Kind kind = Kind::CoefficientCovariance;
    Eigen::VectorXd dense_grid;
    std::vector<Eigen::MatrixXd> basis_on_grid; // per marker: dense grid x d_k
    Eigen::MatrixXd coef_cov;                   // full covariance (CoefficientCovariance)
    Eigen::VectorXd score_variances;            // nu_m (KlScores)

    int coef_dim() const;
};

struct SimScenario {
    std::string name = "custom";
    int n = 150;
    int num_markers = 6;
    int grid_size = 101;
    double t_max = 1.0;
    double lambda_scale = 1.37, lambda_power = 0.37; // log baseline a * t^b
    double gamma_intercept = -1.5, gamma_covariate = 0.48;
    Eigen::VectorXd alpha;
    FixedEffectsConfig mu_fixed; // identical across markers
    double log_sigma = -2.8134107167600364; // log(0.06)
    double censor_upper = 1.75;
    double retention = 0.25;
    int max_obs_per_marker = 15;
    RandomProcess process;

    Eigen::VectorXd grid() const { return Eigen::VectorXd::LinSpaced(grid_size, 0.0, t_max); }
};

SimScenario build_scenario_I();
SimScenario build_scenario_II();

// Scenario I restricted to its first k markers (coefficient-covariance
// processes only).
SimScenario restrict_markers(const SimScenario& scenario, int k);

// Kernel ingredients, exposed for tests: the 12x12 random intercept/slope
// covariance of scenario I and the basis functions / 6x6 coefficient
// covariance of scenario II.
Eigen::MatrixXd scenario_I_coef_cov();
Eigen::MatrixXd scenario_II_coef_cov();
std::vector<Eigen::MatrixXd> scenario_II_basis(const Eigen::VectorXd& grid);

// Eigenbasis of the scenario's random-process kernel on a model grid (the
// oracle basis handed to TRUE-arm fits).
fpca::MfpcBasis true_basis(const SimScenario& scenario, int grid_size = 101);

struct SimulatedData {
    LongSurvDataset data;
    SimScenario scenario;
    std::uint64_t seed = 0;
    Eigen::MatrixXd coefs;                  // n x coef_dim random draws
    std::vector<Eigen::MatrixXd> trajectories; // per subject: dense grid x K

    double covariate_x(int subject) const { return data.subjects[subject].covariates.at("x"); }
    double eta_gamma(int subject) const;
    double eta_lambda(double t) const; // log baseline hazard
    double eta_mu(int subject, int marker, double t) const;
    double alpha(int marker) const { return scenario.alpha(marker); }
    double log_sigma() const { return scenario.log_sigma; }
};

SimulatedData simulate(const SimScenario& scenario, std::uint64_t seed);

// Draws independent scores rho_im ~ N(0, nu_m) and evaluates the trajectories
// on the process grid; exposed for tests.
struct KlDraw {
    Eigen::MatrixXd scores;                    // n x M
    std::vector<Eigen::MatrixXd> trajectories; // per subject: grid x K
};
KlDraw draw_kl_random_effects(const SimScenario& scenario, int n, Rng& rng);

// Solves Lambda(t) = -log(U) by bisection with composite Gauss-Legendre
// cumulative hazards; returns +infinity when no event occurs by t_max.
double draw_survival_time(const std::function<double(double)>& log_hazard, double t_max,
                          Rng& rng, double tol = 1e-8);

} // namespace mfjm::sim
