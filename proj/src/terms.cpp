#include "mfjm/terms.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mfjm/errors.hpp"

namespace mfjm::jm {

std::string TermSpec::name() const {
    switch (kind) {
        case TermKind::Intercept: return "(Intercept)";
        case TermKind::Linear: return covariate;
        case TermKind::LinearTime: return "time";
        case TermKind::TimeInteraction: return "time:" + covariate;
        case TermKind::Smooth: return "s(" + covariate + ")";
        case TermKind::SmoothTime: return "s(time)";
        case TermKind::MfpcRandomEffect: return "mfpc";
    }
    return "?";
}

std::string label_name(Label label, int marker) {
    switch (label) {
        case Label::Lambda: return "lambda";
        case Label::Gamma: return "gamma";
        case Label::Alpha: return "alpha" + std::to_string(marker + 1);
        case Label::Mu: return "mu" + std::to_string(marker + 1);
        case Label::Sigma: return "sigma" + std::to_string(marker + 1);
    }
    return "?";
}

void ModelSpec::validate() const {
    const int k_count = num_markers();
    if (k_count == 0) throw ConfigError("model spec has no markers");
    if (static_cast<int>(alpha.size()) != k_count || static_cast<int>(sigma.size()) != k_count)
        throw ConfigError("alpha/sigma term lists must match marker count");
    if (basis.num_markers() != k_count)
        throw ConfigError("MFPC basis marker count does not match model spec");
    if (basis.truncation < 1) throw ConfigError("MFPC basis truncation must be >= 1");
    for (int k = 0; k < k_count; ++k) {
        int mfpc_terms = 0;
        for (const auto& t : mu[k])
            if (t.kind == TermKind::MfpcRandomEffect) ++mfpc_terms;
        if (mfpc_terms != 1)
            throw ConfigError("mu predictor " + std::to_string(k + 1) +
                              " must contain exactly one MFPC random-effect term");
        for (const auto& list : {alpha[k], sigma[k]})
            for (const auto& t : list)
                if (t.kind == TermKind::MfpcRandomEffect)
                    throw ConfigError("MFPC terms are only allowed in mu predictors");
    }
    for (const auto& t : lambda)
        if (t.kind == TermKind::MfpcRandomEffect || t.kind == TermKind::Smooth ||
            t.kind == TermKind::Linear)
            if (t.kind == TermKind::MfpcRandomEffect)
                throw ConfigError("MFPC terms are only allowed in mu predictors");
    for (const auto& t : gamma)
        if (t.kind == TermKind::LinearTime || t.kind == TermKind::TimeInteraction ||
            t.kind == TermKind::SmoothTime || t.kind == TermKind::MfpcRandomEffect)
            throw ConfigError("gamma terms must be time-constant");
}

void CompiledTerm::eval_row(const LongSurvDataset& data, int subject, double t,
                            double* out) const {
    switch (spec.kind) {
        case TermKind::Intercept: out[0] = 1.0; break;
        case TermKind::Linear: out[0] = data.covariate(subject, spec.covariate); break;
        case TermKind::LinearTime: out[0] = t; break;
        case TermKind::TimeInteraction:
            out[0] = t * data.covariate(subject, spec.covariate);
            break;
        case TermKind::Smooth:
        case TermKind::SmoothTime: {
            const double arg = spec.kind == TermKind::SmoothTime
                                   ? t
                                   : data.covariate(subject, spec.covariate);
            const Eigen::RowVectorXd raw = spline::eval_bspline_row(spec.basis, arg);
            Eigen::Map<Eigen::RowVectorXd> mapped(out, dim);
            mapped = raw * centering.null_basis;
            break;
        }
        case TermKind::MfpcRandomEffect:
            throw ConfigError("MFPC term rows are handled by the engine");
    }
    if (shift.size() > 0) {
        for (int j = 0; j < dim; ++j) out[j] = (out[j] - shift(j)) / scale(j);
    }
}

StandardizationRecord standardize_columns(Eigen::MatrixXd& design, Eigen::MatrixXd& penalty) {
    const int p = static_cast<int>(design.cols());
    const auto n = static_cast<double>(design.rows());
    StandardizationRecord rec;
    rec.shift = Eigen::VectorXd::Zero(p);
    rec.scale = Eigen::VectorXd::Ones(p);
    for (int j = 0; j < p; ++j) {
        const double mean = design.col(j).mean();
        const double var = (design.col(j).array() - mean).square().sum() / std::max(1.0, n - 1.0);
        const double sd = std::sqrt(var);
        const bool constant = (design.col(j).array() - design(0, j)).abs().maxCoeff() < 1e-14;
        if (constant || sd < 1e-12) continue; // constant or degenerate: leave untouched
        rec.shift(j) = mean;
        rec.scale(j) = sd;
        design.col(j) = (design.col(j).array() - mean) / sd;
        rec.any = true;
    }
    if (rec.any && penalty.size() > 0) {
        const Eigen::VectorXd inv_scale = rec.scale.cwiseInverse();
        penalty = inv_scale.asDiagonal() * penalty * inv_scale.asDiagonal();
        penalty = 0.5 * (penalty + penalty.transpose().eval());
    }
    return rec;
}

namespace {

struct ConstructionRows {
    std::vector<int> subjects;
    Eigen::VectorXd times;
};

ConstructionRows construction_rows(const LongSurvDataset& data, Label label, int marker) {
    ConstructionRows rows;
    if (label == Label::Mu || label == Label::Sigma) {
        std::vector<double> times;
        for (int i = 0; i < data.num_subjects(); ++i)
            for (const auto& obs : data.subjects[i].marker_obs[marker]) {
                rows.subjects.push_back(i);
                times.push_back(obs.time);
            }
        rows.times = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<long>(times.size()));
    } else {
        rows.subjects.resize(data.num_subjects());
        rows.times.resize(data.num_subjects());
        for (int i = 0; i < data.num_subjects(); ++i) {
            rows.subjects[i] = i;
            rows.times(i) = label == Label::Gamma ? 0.0 : data.subjects[i].follow_up;
        }
    }
    return rows;
}

bool is_parametric(TermKind kind) {
    return kind == TermKind::Intercept || kind == TermKind::Linear ||
           kind == TermKind::LinearTime || kind == TermKind::TimeInteraction;
}

CompiledTerm compile_term(const TermSpec& spec, const LongSurvDataset& data, Label label,
                          const ConstructionRows& rows, bool standardize_label) {
    CompiledTerm term;
    term.spec = spec;
    if (is_parametric(spec.kind)) {
        term.dim = 1;
        term.penalty = Eigen::MatrixXd::Zero(1, 1);
        term.penalized = false;
    } else if (spec.kind == TermKind::Smooth || spec.kind == TermKind::SmoothTime) {
        if (rows.subjects.empty())
            throw SchemaError("smooth term '" + spec.name() + "' for " +
                              label_name(label, 0) + " has no construction rows");
        // Infer the domain from the data when unset.
        if (!(term.spec.basis.hi > term.spec.basis.lo)) {
            if (spec.kind == TermKind::SmoothTime) {
                term.spec.basis.lo = 0.0;
                term.spec.basis.hi = data.t_max;
            } else {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (int i : rows.subjects) {
                    const double z = data.covariate(i, spec.covariate);
                    lo = std::min(lo, z);
                    hi = std::max(hi, z);
                }
                term.spec.basis.lo = lo;
                term.spec.basis.hi = hi;
            }
        }
        Eigen::VectorXd args(rows.subjects.size());
        for (std::size_t r = 0; r < rows.subjects.size(); ++r)
            args(r) = spec.kind == TermKind::SmoothTime
                          ? rows.times(static_cast<long>(r))
                          : data.covariate(rows.subjects[r], spec.covariate);
        const Eigen::MatrixXd raw = spline::eval_bspline_basis(term.spec.basis, args);
        const Eigen::MatrixXd raw_penalty =
            spline::difference_penalty(term.spec.basis.num_basis, term.spec.basis.penalty_order);
        auto centered = spline::center_design(raw, raw_penalty);
        term.dim = static_cast<int>(centered.design.cols());
        term.penalty = std::move(centered.penalty);
        term.centering = std::move(centered.transform);
        term.penalized = true;
    } else {
        throw ConfigError("unexpected term kind in compile_term");
    }

    if (standardize_label) {
        // Standardize over the construction rows (event times / subjects).
        Eigen::MatrixXd design(rows.subjects.size(), term.dim);
        std::vector<double> buf(term.dim);
        for (std::size_t r = 0; r < rows.subjects.size(); ++r) {
            term.eval_row(data, rows.subjects[r], rows.times(static_cast<long>(r)), buf.data());
            for (int j = 0; j < term.dim; ++j) design(static_cast<long>(r), j) = buf[j];
        }
        auto rec = standardize_columns(design, term.penalty);
        if (rec.any) {
            term.shift = std::move(rec.shift);
            term.scale = std::move(rec.scale);
        }
    }
    return term;
}

double numeric_rank(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const double tol = 1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    return static_cast<double>((eig.eigenvalues().array() > tol).count());
}

void append_blocks(std::vector<Block>& blocks, Label label, int marker,
                   const std::vector<CompiledTerm>& terms) {
    // Parametric terms of one label merge into a single block; each smooth
    // term is its own block.
    Block param;
    param.label = label;
    param.marker = marker;
    param.name = label_name(label, marker) + ".param";
    for (int h = 0; h < static_cast<int>(terms.size()); ++h) {
        const auto& term = terms[h];
        if (term.spec.kind == TermKind::MfpcRandomEffect) continue;
        if (term.penalized) {
            Block b;
            b.label = label;
            b.marker = marker;
            b.name = label_name(label, marker) + "." + term.spec.name();
            b.dim = term.dim;
            b.penalty = term.penalty;
            b.penalty_rank = numeric_rank(term.penalty);
            b.penalized = true;
            b.term_indices = {h};
            b.term_offsets = {0};
            blocks.push_back(std::move(b));
        } else {
            param.term_indices.push_back(h);
            param.term_offsets.push_back(param.dim);
            param.dim += term.dim;
        }
    }
    if (param.dim > 0) {
        param.penalty = Eigen::MatrixXd::Zero(param.dim, param.dim);
        param.penalty_rank = 0.0;
        param.penalized = false;
        blocks.push_back(std::move(param));
    }
}

} // namespace

Eigen::MatrixXd FixedDesign::eval(const LongSurvDataset& data, const std::vector<int>& subjects,
                                  const Eigen::VectorXd& times) const {
    Eigen::MatrixXd out(subjects.size(), dim);
    std::vector<double> buf(dim);
    for (std::size_t r = 0; r < subjects.size(); ++r) {
        for (std::size_t q = 0; q < terms.size(); ++q)
            terms[q].eval_row(data, subjects[r], times(static_cast<long>(r)),
                              buf.data() + offsets[q]);
        for (int j = 0; j < dim; ++j) out(static_cast<long>(r), j) = buf[j];
    }
    return out;
}

FixedDesign build_fixed_design(const std::vector<TermSpec>& specs, const LongSurvDataset& data,
                               const std::vector<int>& subjects, const Eigen::VectorXd& times) {
    FixedDesign fd;
    ConstructionRows rows;
    rows.subjects = subjects;
    rows.times = times;
    for (const auto& spec : specs) {
        if (spec.kind == TermKind::MfpcRandomEffect) continue; // random effects excluded
        auto term = compile_term(spec, data, Label::Mu, rows, false);
        fd.offsets.push_back(fd.dim);
        fd.dim += term.dim;
        fd.any_penalized = fd.any_penalized || term.penalized;
        fd.terms.push_back(std::move(term));
    }
    if (fd.dim == 0) throw ConfigError("build_fixed_design: no fixed-effect terms");
    fd.penalty = Eigen::MatrixXd::Zero(fd.dim, fd.dim);
    for (std::size_t q = 0; q < fd.terms.size(); ++q)
        fd.penalty.block(fd.offsets[q], fd.offsets[q], fd.terms[q].dim, fd.terms[q].dim) =
            fd.terms[q].penalty;
    fd.design = fd.eval(data, subjects, times);
    return fd;
}

const std::vector<CompiledTerm>& CompiledModel::terms_for(Label label, int marker) const {
    switch (label) {
        case Label::Lambda: return lambda_terms;
        case Label::Gamma: return gamma_terms;
        case Label::Alpha: return alpha_terms[marker];
        case Label::Mu: return mu_terms[marker];
        case Label::Sigma: return sigma_terms[marker];
    }
    throw ConfigError("unknown label");
}

int CompiledModel::block_index(const std::string& name) const {
    for (int b = 0; b < static_cast<int>(blocks.size()); ++b)
        if (blocks[b].name == name) return b;
    throw ConfigError("unknown block '" + name + "'");
}

Eigen::MatrixXd CompiledModel::block_design(const Block& block, const std::vector<int>& subjects,
                                            const Eigen::VectorXd& times) const {
    if (block.score_block)
        throw ConfigError("block_design is not defined for score blocks");
    const auto& terms = terms_for(block.label, block.marker);
    Eigen::MatrixXd out(subjects.size(), block.dim);
    std::vector<double> buf(block.dim);
    for (std::size_t r = 0; r < subjects.size(); ++r) {
        for (std::size_t q = 0; q < block.term_indices.size(); ++q) {
            const auto& term = terms[block.term_indices[q]];
            term.eval_row(data, subjects[r], times(static_cast<long>(r)),
                          buf.data() + block.term_offsets[q]);
        }
        for (int j = 0; j < block.dim; ++j) out(static_cast<long>(r), j) = buf[j];
    }
    return out;
}

std::shared_ptr<const CompiledModel> compile_model(const ModelSpec& spec,
                                                   const LongSurvDataset& data) {
    spec.validate();
    data.validate();
    if (data.num_markers() != spec.num_markers())
        throw SchemaError("dataset has " + std::to_string(data.num_markers()) +
                          " markers, model spec has " + std::to_string(spec.num_markers()));

    auto model = std::make_shared<CompiledModel>();
    model->spec = spec;
    model->data = data;
    model->num_components = spec.basis.truncation;

    const bool std_surv = spec.standardize_survival;
    const auto lambda_rows = construction_rows(data, Label::Lambda, -1);
    for (const auto& t : spec.lambda)
        model->lambda_terms.push_back(compile_term(t, data, Label::Lambda, lambda_rows, std_surv));
    const auto gamma_rows = construction_rows(data, Label::Gamma, -1);
    for (const auto& t : spec.gamma)
        model->gamma_terms.push_back(compile_term(t, data, Label::Gamma, gamma_rows, std_surv));

    const int k_count = spec.num_markers();
    model->alpha_terms.resize(k_count);
    model->mu_terms.resize(k_count);
    model->sigma_terms.resize(k_count);
    for (int k = 0; k < k_count; ++k) {
        const auto alpha_rows = construction_rows(data, Label::Alpha, k);
        for (const auto& t : spec.alpha[k])
            model->alpha_terms[k].push_back(
                compile_term(t, data, Label::Alpha, alpha_rows, std_surv));
        const auto mu_rows = construction_rows(data, Label::Mu, k);
        for (const auto& t : spec.mu[k]) {
            if (t.kind == TermKind::MfpcRandomEffect) {
                CompiledTerm term;
                term.spec = t;
                term.dim = 0; // engine-managed
                model->mu_terms[k].push_back(std::move(term));
            } else {
                model->mu_terms[k].push_back(compile_term(t, data, Label::Mu, mu_rows, false));
            }
        }
        const auto sigma_rows = construction_rows(data, Label::Sigma, k);
        for (const auto& t : spec.sigma[k])
            model->sigma_terms[k].push_back(
                compile_term(t, data, Label::Sigma, sigma_rows, false));
    }

    append_blocks(model->blocks, Label::Lambda, -1, model->lambda_terms);
    append_blocks(model->blocks, Label::Gamma, -1, model->gamma_terms);
    for (int k = 0; k < k_count; ++k)
        append_blocks(model->blocks, Label::Alpha, k, model->alpha_terms[k]);
    for (int k = 0; k < k_count; ++k)
        append_blocks(model->blocks, Label::Mu, k, model->mu_terms[k]);
    for (int m = 0; m < model->num_components; ++m) {
        Block b;
        b.label = Label::Mu;
        b.marker = -1;
        b.score_block = true;
        b.component = m;
        b.name = "rho." + std::to_string(m + 1);
        b.dim = data.num_subjects();
        b.penalty_rank = static_cast<double>(b.dim);
        b.penalized = true;
        model->blocks.push_back(std::move(b));
    }
    for (int k = 0; k < k_count; ++k)
        append_blocks(model->blocks, Label::Sigma, k, model->sigma_terms[k]);
    return model;
}

} // namespace mfjm::jm
