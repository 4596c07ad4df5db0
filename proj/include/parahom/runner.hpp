#pragma once

#include "parahom/config.hpp"

namespace phom {

struct ArtifactInfo {
    std::string path;
    uint64_t bytes = 0;
    std::string checksum;
};

struct RunManifest {
    std::string config_echo;
    std::string version;
    std::vector<std::pair<std::string, double>> wall_times;  // phase -> seconds
    std::vector<ArtifactInfo> artifacts;
    bool pass = false;
    std::string summary;
    int exit_code = 0;  // 0 pass, 1 acceptance fail, 2 config error, 3 solver error

    std::string to_json() const;
};

RunManifest run_experiment(const ExperimentConfig& cfg);

// re-render a rates.csv into plot-ready (log eps, log err) columns
void render_plot_data(const std::string& rates_csv, const std::string& out_path);

}  // namespace phom
