#include "mfjm/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::io {

using nlohmann::json;

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd json_to_vector(const json& j) {
    Eigen::VectorXd out(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<long>(i)) = j[i].get<double>();
    return out;
}

json matrix_to_json_rowmajor(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

Eigen::MatrixXd json_to_matrix_rowmajor(const json& j, long rows, long cols) {
    if (static_cast<long>(j.size()) != rows * cols)
        throw SchemaError("matrix payload has wrong length");
    Eigen::MatrixXd out(rows, cols);
    long idx = 0;
    for (long i = 0; i < rows; ++i)
        for (long c = 0; c < cols; ++c) out(i, c) = j[static_cast<std::size_t>(idx++)].get<double>();
    return out;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

void save_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write " + path);
    out << j.dump(2) << '\n';
}

} // namespace

void write_basis_json(const fpca::MfpcBasis& basis, const std::string& path) {
    json j;
    j["grid"] = vector_to_json(basis.grid);
    j["weights"] = vector_to_json(basis.weights);
    j["eigenvalues"] = vector_to_json(basis.eigenvalues);
    j["truncation"] = basis.truncation;
    json efs = json::array();
    for (const auto& ef : basis.eigenfunctions) efs.push_back(matrix_to_json_rowmajor(ef));
    j["eigenfunctions"] = efs;
    if (basis.combination_weights.size() > 0) {
        j["combination_weights"] = matrix_to_json_rowmajor(basis.combination_weights);
        j["combination_rows"] = basis.combination_weights.rows();
    }
    save_json_file(j, path);
}

fpca::MfpcBasis read_basis_json(const std::string& path) {
    const json j = load_json_file(path);
    fpca::MfpcBasis basis;
    try {
        basis.grid = json_to_vector(j.at("grid"));
        basis.weights = json_to_vector(j.at("weights"));
        basis.eigenvalues = json_to_vector(j.at("eigenvalues"));
        basis.truncation = j.at("truncation").get<int>();
        const auto& efs = j.at("eigenfunctions");
        for (const auto& ef : efs)
            basis.eigenfunctions.push_back(json_to_matrix_rowmajor(
                ef, basis.grid.size(), basis.eigenvalues.size()));
        if (j.contains("combination_weights")) {
            const long rows = j.at("combination_rows").get<long>();
            basis.combination_weights = json_to_matrix_rowmajor(
                j.at("combination_weights"), rows,
                static_cast<long>(j.at("combination_weights").size()) / rows);
        }
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    basis.validate();
    return basis;
}

void write_scenario_json(const sim::SimScenario& scenario, std::uint64_t seed,
                         const std::string& path) {
    json j;
    j["name"] = scenario.name;
    j["seed"] = seed;
    j["n"] = scenario.n;
    j["num_markers"] = scenario.num_markers;
    j["grid_size"] = scenario.grid_size;
    j["t_max"] = scenario.t_max;
    j["lambda_scale"] = scenario.lambda_scale;
    j["lambda_power"] = scenario.lambda_power;
    j["gamma_intercept"] = scenario.gamma_intercept;
    j["gamma_covariate"] = scenario.gamma_covariate;
    j["alpha"] = vector_to_json(scenario.alpha);
    j["mu_fixed"] = {scenario.mu_fixed.intercept, scenario.mu_fixed.time,
                     scenario.mu_fixed.covariate, scenario.mu_fixed.interaction};
    j["log_sigma"] = scenario.log_sigma;
    j["censor_upper"] = scenario.censor_upper;
    j["retention"] = scenario.retention;
    j["max_obs_per_marker"] = scenario.max_obs_per_marker;
    save_json_file(j, path);
}

sim::SimScenario read_scenario_json(const std::string& path, std::uint64_t* seed) {
    const json j = load_json_file(path);
    sim::SimScenario s;
    try {
        const std::string name = j.at("name").get<std::string>();
        if (name == "I")
            s = sim::build_scenario_I();
        else if (name == "II")
            s = sim::build_scenario_II();
        else
            throw SchemaError(path + ": unknown scenario '" + name + "'");
        if (j.contains("num_markers") && j.at("num_markers").get<int>() != s.num_markers)
            s = sim::restrict_markers(s, j.at("num_markers").get<int>());
        s.n = j.value("n", s.n);
        s.censor_upper = j.value("censor_upper", s.censor_upper);
        s.retention = j.value("retention", s.retention);
        s.max_obs_per_marker = j.value("max_obs_per_marker", s.max_obs_per_marker);
        if (seed) *seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return s;
}

namespace {

std::vector<std::string> parameter_names(const jm::FittedModel& fit) {
    std::vector<std::string> names;
    for (std::size_t b = 0; b < fit.samples.size(); ++b)
        for (int c = 0; c < fit.samples[b].cols(); ++c)
            names.push_back(fit.block_names[b] + ".c" + std::to_string(c + 1));
    for (const auto& t : fit.tau2_names) names.push_back("tau2." + t);
    return names;
}

} // namespace

void write_samples_csv(const jm::FittedModel& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write " + path);
    const auto names = parameter_names(fit);
    for (std::size_t i = 0; i < names.size(); ++i)
        out << (i ? "," : "") << names[i];
    out << '\n';
    out.precision(17);
    const int draws = fit.num_samples();
    for (int r = 0; r < draws; ++r) {
        bool first = true;
        for (const auto& block : fit.samples)
            for (int c = 0; c < block.cols(); ++c) {
                out << (first ? "" : ",") << block(r, c);
                first = false;
            }
        for (int c = 0; c < fit.tau2_samples.cols(); ++c) out << ',' << fit.tau2_samples(r, c);
        out << '\n';
    }
}

jm::FittedModel read_samples_csv(std::shared_ptr<const jm::CompiledModel> model,
                                 const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) header.push_back(f);
    }
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string f;
        int col = 0;
        while (std::getline(ss, f, ',')) {
            try {
                row.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw SchemaError(path + ": cannot parse value at row " +
                                  std::to_string(lineno) + ", column " + std::to_string(col + 1));
            }
            ++col;
        }
        if (row.size() != header.size())
            throw SchemaError(path + ": row " + std::to_string(lineno) + " has " +
                              std::to_string(row.size()) + " fields, expected " +
                              std::to_string(header.size()));
        rows.push_back(std::move(row));
    }

    jm::FittedModel fit;
    fit.model = model;
    const int draws = static_cast<int>(rows.size());
    const int nb = static_cast<int>(model->blocks.size());
    fit.block_names.resize(nb);
    fit.samples.resize(nb);
    fit.mode.resize(nb);
    std::map<std::string, int> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) column_of[header[c]] = static_cast<int>(c);
    for (int b = 0; b < nb; ++b) {
        const auto& blk = model->blocks[b];
        fit.block_names[b] = blk.name;
        fit.samples[b].resize(draws, blk.dim);
        fit.mode[b] = Eigen::VectorXd::Zero(blk.dim);
        for (int c = 0; c < blk.dim; ++c) {
            const std::string name = blk.name + ".c" + std::to_string(c + 1);
            const auto it = column_of.find(name);
            if (it == column_of.end())
                throw SchemaError(path + ": missing column '" + name + "'");
            for (int r = 0; r < draws; ++r)
                fit.samples[b](r, c) = rows[static_cast<std::size_t>(r)][
                    static_cast<std::size_t>(it->second)];
        }
        if (blk.penalized) fit.tau2_names.push_back(blk.name);
    }
    fit.tau2_samples.resize(draws, static_cast<long>(fit.tau2_names.size()));
    for (std::size_t t = 0; t < fit.tau2_names.size(); ++t) {
        const auto it = column_of.find("tau2." + fit.tau2_names[t]);
        if (it == column_of.end())
            throw SchemaError(path + ": missing column 'tau2." + fit.tau2_names[t] + "'");
        for (int r = 0; r < draws; ++r)
            fit.tau2_samples(r, static_cast<long>(t)) =
                rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(it->second)];
    }
    fit.acceptance.assign(nb, 0.0);
    return fit;
}

void write_summary_json(const jm::FittedModel& fit, const std::string& path) {
    json j;
    json params = json::object();
    for (std::size_t b = 0; b < fit.samples.size(); ++b) {
        const auto& m = fit.samples[b];
        for (int c = 0; c < m.cols(); ++c) {
            std::vector<double> col(m.rows());
            for (int r = 0; r < m.rows(); ++r) col[static_cast<std::size_t>(r)] = m(r, c);
            json p;
            p["mean"] = m.col(c).mean();
            p["q2.5"] = quantile_type7(col, 0.025);
            p["q97.5"] = quantile_type7(col, 0.975);
            params[fit.block_names[b] + ".c" + std::to_string(c + 1)] = p;
        }
    }
    j["parameters"] = params;
    json acc = json::object();
    for (std::size_t b = 0; b < fit.block_names.size(); ++b)
        acc[fit.block_names[b]] = fit.acceptance.empty() ? 0.0 : fit.acceptance[b];
    j["acceptance"] = acc;
    j["num_samples"] = fit.num_samples();
    j["warnings"] = fit.warnings;
    j["ridge_fallbacks"] = fit.ridge_fallbacks;
    save_json_file(j, path);
}

void write_report_csv(const std::vector<metrics::EvalReport>& replicate_reports,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write " + path);
    out << "predictor,metric,value,replicate\n";
    out.precision(17);
    for (std::size_t r = 0; r < replicate_reports.size(); ++r) {
        for (const auto& [name, m] : replicate_reports[r].predictor) {
            out << name << ",bias," << m.bias << ',' << r + 1 << '\n';
            out << name << ",rmse," << m.rmse << ',' << r + 1 << '\n';
            out << name << ",coverage," << m.coverage << ',' << r + 1 << '\n';
        }
        for (int c = 0; c < replicate_reports[r].mfpc_errors.size(); ++c)
            out << "mfpc" << c + 1 << ",norm_error," << replicate_reports[r].mfpc_errors(c)
                << ',' << r + 1 << '\n';
    }
}

void write_report_json(const metrics::EvalReport& aggregate, const std::string& path) {
    json j;
    j["replicates"] = aggregate.replicates;
    json preds = json::object();
    for (const auto& [name, m] : aggregate.predictor) {
        preds[name] = {{"bias", m.bias}, {"rmse", m.rmse}, {"coverage", m.coverage}};
    }
    j["predictors"] = preds;
    if (aggregate.mfpc_errors.size() > 0)
        j["mfpc_norm_errors"] = vector_to_json(aggregate.mfpc_errors);
    json tr = json::object();
    for (const auto& [name, t] : aggregate.time_resolved) {
        tr[name] = {{"grid", vector_to_json(t.grid)},
                    {"bias", vector_to_json(t.bias)},
                    {"rmse", vector_to_json(t.rmse)},
                    {"coverage", vector_to_json(t.coverage)},
                    {"n_risk", vector_to_json(t.n_risk)}};
    }
    if (!tr.empty()) j["time_resolved"] = tr;
    save_json_file(j, path);
}

std::string toml_to_json(const std::string& toml_text) {
    json root = json::object();
    json* section = &root;
    std::istringstream in(toml_text);
    std::string line;
    int lineno = 0;
    auto parse_scalar = [](const std::string& raw) -> json {
        std::string s = raw;
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t");
        if (a == std::string::npos) throw SchemaError("TOML: empty value");
        s = s.substr(a, b - a + 1);
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
            return s.substr(1, s.size() - 2);
        if (s == "true") return true;
        if (s == "false") return false;
        try {
            if (s.find_first_of(".eE") != std::string::npos) return std::stod(s);
            return std::stoll(s);
        } catch (const std::exception&) {
            throw SchemaError("TOML: cannot parse value '" + s + "'");
        }
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw SchemaError("TOML line " + std::to_string(lineno) + ": bad section");
            std::string name = line.substr(1, line.size() - 2);
            section = &root;
            std::stringstream ss(name);
            std::string part;
            while (std::getline(ss, part, '.')) section = &((*section)[part]);
            if (!section->is_object()) *section = json::object();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SchemaError("TOML line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        key = key.substr(0, key.find_last_not_of(" \t") + 1);
        std::string value = line.substr(eq + 1);
        const auto va = value.find_first_not_of(" \t");
        if (va == std::string::npos)
            throw SchemaError("TOML line " + std::to_string(lineno) + ": missing value");
        value = value.substr(va);
        if (value.front() == '[') {
            if (value.back() != ']')
                throw SchemaError("TOML line " + std::to_string(lineno) + ": bad array");
            json arr = json::array();
            std::stringstream ss(value.substr(1, value.size() - 2));
            std::string item;
            while (std::getline(ss, item, ','))
                if (item.find_first_not_of(" \t") != std::string::npos)
                    arr.push_back(parse_scalar(item));
            (*section)[key] = arr;
        } else {
            (*section)[key] = parse_scalar(value);
        }
    }
    return root.dump();
}

namespace {

jm::TermSpec term_from_json(const json& j, const std::vector<std::string>& marker_names) {
    (void)marker_names;
    const std::string type = j.at("type").get<std::string>();
    if (type == "intercept") return jm::TermSpec::intercept();
    if (type == "linear") return jm::TermSpec::linear(j.at("of").get<std::string>());
    if (type == "time") return jm::TermSpec::linear_time();
    if (type == "interaction") return jm::TermSpec::time_interaction(j.at("of").get<std::string>());
    if (type == "mfpc") return jm::TermSpec::mfpc();
    if (type == "pspline" || type == "pspline_time") {
        spline::SplineBasisDef def;
        def.degree = j.value("degree", 3);
        def.num_basis = j.value("num_basis", 20);
        def.penalty_order = j.value("penalty_order", 3);
        def.lo = j.value("lo", 0.0);
        def.hi = j.value("hi", 0.0);
        const std::string of = j.value("of", std::string("time"));
        if (of == "time") return jm::TermSpec::smooth_time(def);
        return jm::TermSpec::smooth(of, def);
    }
    throw SchemaError("unknown term type '" + type + "'");
}

std::vector<jm::TermSpec> term_list(const json& j, const std::vector<std::string>& markers) {
    std::vector<jm::TermSpec> out;
    for (const auto& t : j) out.push_back(term_from_json(t, markers));
    return out;
}

} // namespace

FitConfig read_fit_config(const std::string& path, const fpca::MfpcBasis& basis,
                          const std::vector<std::string>& marker_names) {
    json j;
    if (path.size() > 5 && path.substr(path.size() - 5) == ".toml") {
        std::ifstream in(path);
        if (!in) throw SchemaError("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        j = json::parse(toml_to_json(ss.str()));
    } else {
        j = load_json_file(path);
    }

    FitConfig cfg;
    try {
        const int k_count = static_cast<int>(marker_names.size());
        if (j.contains("lambda")) cfg.spec.lambda = term_list(j.at("lambda").at("terms"), marker_names);
        if (j.contains("gamma")) cfg.spec.gamma = term_list(j.at("gamma").at("terms"), marker_names);
        cfg.spec.alpha.assign(k_count, {jm::TermSpec::intercept()});
        cfg.spec.sigma.assign(k_count, {jm::TermSpec::intercept()});
        cfg.spec.mu.assign(k_count, {jm::TermSpec::intercept(), jm::TermSpec::mfpc()});
        if (j.contains("alpha")) {
            const auto& arr = j.at("alpha");
            for (int k = 0; k < k_count && k < static_cast<int>(arr.size()); ++k)
                cfg.spec.alpha[k] = term_list(arr[k].at("terms"), marker_names);
        }
        if (j.contains("mu")) {
            const auto& arr = j.at("mu");
            for (int k = 0; k < k_count && k < static_cast<int>(arr.size()); ++k)
                cfg.spec.mu[k] = term_list(arr[k].at("terms"), marker_names);
        }
        if (j.contains("sigma")) {
            const auto& arr = j.at("sigma");
            for (int k = 0; k < k_count && k < static_cast<int>(arr.size()); ++k)
                cfg.spec.sigma[k] = term_list(arr[k].at("terms"), marker_names);
        }
        if (j.contains("priors")) {
            const auto& p = j.at("priors");
            cfg.spec.priors.ig_shape = p.value("ig_shape", 0.001);
            cfg.spec.priors.ig_scale = p.value("ig_scale", 0.001);
            cfg.spec.priors.fixed_sd = p.value("fixed_sd", 1000.0);
            cfg.spec.priors.half_cauchy_variances = p.value("half_cauchy", false);
            cfg.spec.priors.half_cauchy_scale = p.value("half_cauchy_scale", 25.0);
        }
        cfg.spec.standardize_survival = j.value("standardize_survival", true);
        if (j.contains("chain")) {
            const auto& c = j.at("chain");
            cfg.chain.iterations = c.value("iterations", 5500);
            cfg.chain.burnin = c.value("burnin", 500);
            cfg.chain.thin = c.value("thin", 5);
            cfg.chain.seed = c.value("seed", std::uint64_t{1});
        }
        if (j.contains("quadrature")) {
            const auto& q = j.at("quadrature");
            cfg.quad.panels = q.value("panels", 4);
            cfg.quad.grading = q.value("grading", 4.0);
        }
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    cfg.spec.basis = basis;
    return cfg;
}

} // namespace mfjm::io
