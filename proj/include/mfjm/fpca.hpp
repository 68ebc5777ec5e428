#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mfjm/dataset.hpp"
#include "mfjm/mfpc.hpp"
#include "mfjm/terms.hpp"

namespace mfjm::fpca {

// Univariate FPCA result for one marker: grid-evaluated mean and
// eigenfunctions, eigenvalues, Gaussian-noise variance estimate, and
// conditional-expectation scores for the estimation subjects.
struct UfpcaResult {
    int marker = 0;
    Eigen::VectorXd grid;
    Eigen::VectorXd mean; // covariate-free part of the fitted mean on the grid
    Eigen::MatrixXd eigenfunctions; // grid x M_k
    Eigen::VectorXd eigenvalues;    // M_k, nonincreasing
    double error_variance = 0.0;
    Eigen::MatrixXd scores; // estimation subjects x M_k

    int num_components() const { return static_cast<int>(eigenvalues.size()); }
};

struct UfpcaOptions {
    int marginal_basis_size = 7; // B-spline functions per covariance margin
    double pve = 0.99;
    int grid_size = 101;
};

struct CenteredObservations {
    std::vector<std::vector<Observation>> per_subject; // residualized (time, value)
    Eigen::VectorXd grid_mean;
};

// Penalized least-squares fit of the marker's fixed-effect terms under a
// working independence assumption; returns the centered observations for the
// given subjects and the covariate-free mean on the grid.
CenteredObservations estimate_marker_mean(const LongSurvDataset& data, int marker,
                                          const std::vector<jm::TermSpec>& fixed_terms,
                                          const std::vector<int>& subjects,
                                          const Eigen::VectorXd& grid);

// Smooth symmetric covariance surface from off-diagonal crossproducts of the
// centered observations (tensor P-spline fit on s <= t, reflected). When
// error_variance is non-null it receives the diagonal-separation estimate of
// the Gaussian noise variance.
Eigen::MatrixXd smooth_covariance(const std::vector<std::vector<Observation>>& centered,
                                  const Eigen::VectorXd& grid, int marginal_basis_size,
                                  double* error_variance = nullptr);

struct CovarianceEigen {
    Eigen::MatrixXd eigenfunctions; // grid x M
    Eigen::VectorXd eigenvalues;
    int num_components = 0;
};

// Eigenpairs of the integral operator under trapezoidal quadrature; negative
// eigenvalues are dropped and M is the smallest count reaching pve of the
// positive-eigenvalue sum.
CovarianceEigen eigen_decompose_covariance(const Eigen::MatrixXd& surface,
                                           const Eigen::VectorXd& grid, double pve);

// Best linear prediction of the scores given sparse noisy observations:
// xi_i = D Phi_i' (Phi_i D Phi_i' + sigma^2 I)^{-1} y*_i.
Eigen::MatrixXd predict_scores_ce(const std::vector<std::vector<Observation>>& centered,
                                  const UfpcaResult& ufpca);

// Subjects with at least min_measurements observations and one measurement
// after fraction * t_max on every marker. Used for basis estimation only.
std::vector<int> trim_subjects_for_mfpca(const LongSurvDataset& data, double fraction,
                                         int min_measurements = 1);

UfpcaResult run_ufpca(const LongSurvDataset& data, int marker,
                      const std::vector<jm::TermSpec>& fixed_terms,
                      const std::vector<int>& subjects, const UfpcaOptions& options);

enum class WeightRule { Unit, InverseIntegratedVariance };

// Combines univariate FPCAs through the eigendecomposition of the weighted
// score covariance; eigenfunctions are renormalized to unit weighted norm.
MfpcBasis combine_mfpca(const std::vector<UfpcaResult>& ufpcas, WeightRule rule);
MfpcBasis combine_mfpca(const std::vector<UfpcaResult>& ufpcas, const Eigen::VectorXd& weights);

// Keeps the leading components reaching the cumulative explained-variance
// threshold; trailing eigenpairs are dropped.
MfpcBasis truncate_basis(const MfpcBasis& basis, double pve);

struct MfpcaOptions {
    UfpcaOptions ufpca;
    WeightRule weights = WeightRule::Unit;
    double trim_fraction = 0.1;
    int trim_min_measurements = 1;
};

// Full pipeline: trimming, per-marker UFPCA, score-covariance combination.
MfpcBasis estimate_mfpc_basis(const LongSurvDataset& data,
                              const std::vector<std::vector<jm::TermSpec>>& mu_fixed_terms,
                              const MfpcaOptions& options);

// Penalized least squares with the smoothing parameter chosen by generalized
// cross-validation on a log grid (shared across penalty blocks).
Eigen::VectorXd penalized_lsq_gcv(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                                  const Eigen::VectorXd& response,
                                  double* chosen_lambda = nullptr);

} // namespace mfjm::fpca
