#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tilq {

/// Everything that determines a run's outputs, plus wall-clock for the
/// record. Two runs whose manifests agree on all fields except wall_clock_sec
/// produce byte-identical CSV bodies.
struct RunManifest {
    std::string command;
    std::string config_path;
    int n_steps = 0;
    int64_t n_paths = 0;
    uint64_t base_seed = 0;
    std::vector<double> eps_list;
    std::vector<double> t_list;
    // tolerances and defaults in effect
    double prop_tol = 1e-9;
    double psd_slack = 1e-10;
    double cond_threshold = 1e12;
    double lambda_tol = 1e-9;
    double div_guard = 1e-14;
    int threads = 1;
    std::string tool_version;
    double wall_clock_sec = 0.0;

    std::string to_json() const;
    void write(const std::string& path) const;
};

}  // namespace tilq
