#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/bspline.hpp"
#include "mfjm/dataset.hpp"
#include "mfjm/mfpc.hpp"

namespace mfjm::jm {

enum class TermKind {
    Intercept,
    Linear,          // covariate z
    LinearTime,      // t
    TimeInteraction, // t * z
    Smooth,          // centered P-spline in z
    SmoothTime,      // centered P-spline in t
    MfpcRandomEffect // shared score vector over the MFPC basis
};

struct TermSpec {
    TermKind kind = TermKind::Intercept;
    std::string covariate;
    spline::SplineBasisDef basis{3, 10, 0.0, 0.0, 2}; // lo==hi means infer from data

    std::string name() const;

    static TermSpec intercept() { return {TermKind::Intercept, "", {}}; }
    static TermSpec linear(const std::string& z) { return {TermKind::Linear, z, {}}; }
    static TermSpec linear_time() { return {TermKind::LinearTime, "", {}}; }
    static TermSpec time_interaction(const std::string& z) {
        return {TermKind::TimeInteraction, z, {}};
    }
    static TermSpec smooth_time(const spline::SplineBasisDef& def) {
        return {TermKind::SmoothTime, "", def};
    }
    static TermSpec smooth(const std::string& z, const spline::SplineBasisDef& def) {
        return {TermKind::Smooth, z, def};
    }
    static TermSpec mfpc() { return {TermKind::MfpcRandomEffect, "", {}}; }
};

struct PriorConfig {
    double ig_shape = 0.001;
    double ig_scale = 0.001;
    double fixed_sd = 1000.0;
    bool half_cauchy_variances = false; // slice-sampled half-Cauchy instead of IG
    double half_cauchy_scale = 25.0;
};

// Declarative description of every structured additive predictor. Each mu_k
// must contain exactly one MfpcRandomEffect term; all share the single score
// vector over the attached basis.
struct ModelSpec {
    std::vector<TermSpec> lambda;
    std::vector<TermSpec> gamma;
    std::vector<std::vector<TermSpec>> alpha; // per marker
    std::vector<std::vector<TermSpec>> mu;    // per marker
    std::vector<std::vector<TermSpec>> sigma; // per marker
    fpca::MfpcBasis basis;
    PriorConfig priors;
    bool standardize_survival = true;

    int num_markers() const { return static_cast<int>(mu.size()); }
    void validate() const;
};

enum class Label { Lambda, Gamma, Alpha, Mu, Sigma };

std::string label_name(Label label, int marker);

// A term compiled against a dataset: centered, optionally standardized, with
// its penalty in the final coefficient parameterization.
struct CompiledTerm {
    TermSpec spec;
    int dim = 0;
    Eigen::MatrixXd penalty;  // dim x dim, zero matrix for parametric terms
    bool penalized = false;
    spline::CenteringTransform centering;
    Eigen::VectorXd shift, scale; // standardization record (size 0 if none)

    void eval_row(const LongSurvDataset& data, int subject, double t, double* out) const;
};

// One MCMC coefficient block: the merged parametric terms of a label, a
// single smooth term, or one MFPC score component (dim n).
struct Block {
    std::string name;
    Label label = Label::Lambda;
    int marker = -1;          // for alpha/mu/sigma
    bool score_block = false; // rho_(m)
    int component = -1;       // m for score blocks
    int dim = 0;
    Eigen::MatrixXd penalty; // empty for score blocks (identity implied)
    double penalty_rank = 0.0;
    bool penalized = false;
    std::vector<int> term_indices; // indices into the label's term list
    std::vector<int> term_offsets; // column offset of each term inside the block
};

struct CompiledModel {
    ModelSpec spec;
    LongSurvDataset data;
    std::vector<CompiledTerm> lambda_terms, gamma_terms;
    std::vector<std::vector<CompiledTerm>> alpha_terms, mu_terms, sigma_terms;
    std::vector<Block> blocks;
    int num_components = 0; // M used in the fit

    const std::vector<CompiledTerm>& terms_for(Label label, int marker) const;
    int block_index(const std::string& name) const;

    // Design rows of one block at (subject, time) pairs.
    Eigen::MatrixXd block_design(const Block& block, const std::vector<int>& subjects,
                                 const Eigen::VectorXd& times) const;
};

std::shared_ptr<const CompiledModel> compile_model(const ModelSpec& spec,
                                                   const LongSurvDataset& data);

// Centers/scales nonconstant columns of a survival design and transforms the
// penalty so the penalized fit is unchanged; constant columns are untouched.
struct StandardizationRecord {
    Eigen::VectorXd shift, scale;
    bool any = false;
};

StandardizationRecord standardize_columns(Eigen::MatrixXd& design, Eigen::MatrixXd& penalty);

// Fixed-effect design for a term list compiled over given (subject, time)
// rows, with a blockdiagonal penalty. Used for working-independence mean
// fits outside the joint model.
struct FixedDesign {
    std::vector<CompiledTerm> terms;
    std::vector<int> offsets;
    int dim = 0;
    Eigen::MatrixXd design;  // construction rows
    Eigen::MatrixXd penalty; // blockdiagonal, zero rows for parametric terms
    bool any_penalized = false;

    Eigen::MatrixXd eval(const LongSurvDataset& data, const std::vector<int>& subjects,
                         const Eigen::VectorXd& times) const;
};

FixedDesign build_fixed_design(const std::vector<TermSpec>& terms, const LongSurvDataset& data,
                               const std::vector<int>& subjects, const Eigen::VectorXd& times);

} // namespace mfjm::jm
