#pragma once

#include <map>
#include <string>
#include <vector>

namespace mfjm {

struct Observation {
    double time = 0.0;
    double value = 0.0;
};

struct SubjectData {
    std::string id;
    double follow_up = 0.0; // event or censoring time T_i
    int event = 0;          // 1 = event, 0 = censored
    std::map<std::string, double> covariates;
    std::vector<std::vector<Observation>> marker_obs; // one list per marker
};

// Per-subject survival triple plus irregular longitudinal observations for
// K markers. Empty observation lists are allowed.
struct LongSurvDataset {
    std::vector<SubjectData> subjects;
    std::vector<std::string> marker_names;
    double t_max = 1.0;

    int num_subjects() const { return static_cast<int>(subjects.size()); }
    int num_markers() const { return static_cast<int>(marker_names.size()); }

    long marker_obs_count(int k) const {
        long n = 0;
        for (const auto& s : subjects) n += static_cast<long>(s.marker_obs[k].size());
        return n;
    }

    long total_obs_count() const {
        long n = 0;
        for (int k = 0; k < num_markers(); ++k) n += marker_obs_count(k);
        return n;
    }

    double covariate(int subject, const std::string& name) const;

    // Checks 0 < T_i <= t_max, delta in {0,1}, t_ijk <= T_i, and consistent
    // marker counts; throws SchemaError on violation.
    void validate() const;
};

// CSV formats:
//   survival.csv:     id,time,event,<covariate columns...>
//   longitudinal.csv: id,marker,time,value
LongSurvDataset read_dataset_csv(const std::string& survival_path,
                                 const std::string& longitudinal_path);
void write_dataset_csv(const LongSurvDataset& data, const std::string& survival_path,
                       const std::string& longitudinal_path);

} // namespace mfjm
