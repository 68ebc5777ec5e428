#include "mfjm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mfjm/errors.hpp"

namespace mfjm {

double LongSurvDataset::covariate(int subject, const std::string& name) const {
    const auto& cov = subjects[subject].covariates;
    const auto it = cov.find(name);
    if (it == cov.end())
        throw SchemaError("covariate '" + name + "' missing for subject " +
                          subjects[subject].id);
    return it->second;
}

void LongSurvDataset::validate() const {
    const int k_count = num_markers();
    for (const auto& s : subjects) {
        if (!(s.follow_up > 0.0) || s.follow_up > t_max)
            throw SchemaError("subject " + s.id + ": follow-up time " +
                              std::to_string(s.follow_up) + " outside (0, t_max]");
        if (s.event != 0 && s.event != 1)
            throw SchemaError("subject " + s.id + ": event indicator must be 0 or 1");
        if (static_cast<int>(s.marker_obs.size()) != k_count)
            throw SchemaError("subject " + s.id + ": marker count mismatch");
        for (int k = 0; k < k_count; ++k) {
            for (const auto& obs : s.marker_obs[k]) {
                if (obs.time < 0.0 || obs.time > s.follow_up + 1e-12)
                    throw SchemaError("subject " + s.id + ", marker " + marker_names[k] +
                                      ": observation time " + std::to_string(obs.time) +
                                      " outside [0, T_i]");
                if (!std::isfinite(obs.value))
                    throw SchemaError("subject " + s.id + ": non-finite observation value");
            }
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, int row, int col, const std::string& file) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw SchemaError(file + ": cannot parse numeric value '" + s + "' at row " +
                          std::to_string(row) + ", column " + std::to_string(col + 1));
    }
}

} // namespace

LongSurvDataset read_dataset_csv(const std::string& survival_path,
                                 const std::string& longitudinal_path) {
    std::ifstream surv(survival_path);
    if (!surv) throw SchemaError("cannot open " + survival_path);
    std::string line;
    if (!std::getline(surv, line)) throw SchemaError(survival_path + ": empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "time" || header[2] != "event")
        throw SchemaError(survival_path + ": header must start with id,time,event");

    LongSurvDataset data;
    std::map<std::string, int> subject_index;
    int row = 1;
    while (std::getline(surv, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw SchemaError(survival_path + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        SubjectData s;
        s.id = fields[0];
        s.follow_up = parse_double(fields[1], row, 1, survival_path);
        const double ev = parse_double(fields[2], row, 2, survival_path);
        s.event = static_cast<int>(ev);
        for (std::size_t c = 3; c < header.size(); ++c)
            s.covariates[header[c]] = parse_double(fields[c], row, static_cast<int>(c), survival_path);
        if (subject_index.count(s.id))
            throw SchemaError(survival_path + ": duplicate subject id '" + s.id + "' at row " +
                              std::to_string(row));
        subject_index[s.id] = data.num_subjects();
        data.subjects.push_back(std::move(s));
    }

    std::ifstream lng(longitudinal_path);
    if (!lng) throw SchemaError("cannot open " + longitudinal_path);
    if (!std::getline(lng, line)) throw SchemaError(longitudinal_path + ": empty file");
    const auto lheader = split_csv_line(line);
    if (lheader.size() != 4 || lheader[0] != "id" || lheader[1] != "marker" ||
        lheader[2] != "time" || lheader[3] != "value")
        throw SchemaError(longitudinal_path + ": header must be id,marker,time,value");

    std::map<std::string, int> marker_index;
    std::vector<std::vector<std::vector<Observation>>> obs_by_subject; // subject x marker
    obs_by_subject.resize(data.subjects.size());
    row = 1;
    while (std::getline(lng, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw SchemaError(longitudinal_path + ": row " + std::to_string(row) +
                              " has " + std::to_string(fields.size()) + " fields, expected 4");
        const auto sit = subject_index.find(fields[0]);
        if (sit == subject_index.end())
            throw SchemaError(longitudinal_path + ": row " + std::to_string(row) +
                              " references unknown subject '" + fields[0] + "'");
        auto mit = marker_index.find(fields[1]);
        if (mit == marker_index.end()) {
            mit = marker_index.emplace(fields[1], static_cast<int>(data.marker_names.size())).first;
            data.marker_names.push_back(fields[1]);
        }
        Observation obs;
        obs.time = parse_double(fields[2], row, 2, longitudinal_path);
        obs.value = parse_double(fields[3], row, 3, longitudinal_path);
        auto& lists = obs_by_subject[sit->second];
        if (static_cast<int>(lists.size()) <= mit->second) lists.resize(mit->second + 1);
        lists[mit->second].push_back(obs);
    }

    const int k_count = static_cast<int>(data.marker_names.size());
    for (int i = 0; i < data.num_subjects(); ++i) {
        auto& lists = obs_by_subject[i];
        lists.resize(k_count);
        for (auto& l : lists)
            std::sort(l.begin(), l.end(),
                      [](const Observation& a, const Observation& b) { return a.time < b.time; });
        data.subjects[i].marker_obs = std::move(lists);
    }
    data.t_max = 0.0;
    for (const auto& s : data.subjects) data.t_max = std::max(data.t_max, s.follow_up);
    data.validate();
    return data;
}

void write_dataset_csv(const LongSurvDataset& data, const std::string& survival_path,
                       const std::string& longitudinal_path) {
    std::ofstream surv(survival_path);
    if (!surv) throw SchemaError("cannot write " + survival_path);
    std::vector<std::string> cov_names;
    if (!data.subjects.empty())
        for (const auto& [name, _] : data.subjects.front().covariates) cov_names.push_back(name);
    surv << "id,time,event";
    for (const auto& name : cov_names) surv << ',' << name;
    surv << '\n';
    surv.precision(17);
    for (const auto& s : data.subjects) {
        surv << s.id << ',' << s.follow_up << ',' << s.event;
        for (const auto& name : cov_names) surv << ',' << s.covariates.at(name);
        surv << '\n';
    }

    std::ofstream lng(longitudinal_path);
    if (!lng) throw SchemaError("cannot write " + longitudinal_path);
    lng << "id,marker,time,value\n";
    lng.precision(17);
    for (const auto& s : data.subjects)
        for (int k = 0; k < data.num_markers(); ++k)
            for (const auto& obs : s.marker_obs[k])
                lng << s.id << ',' << data.marker_names[k] << ',' << obs.time << ','
                    << obs.value << '\n';
}

} // namespace mfjm
