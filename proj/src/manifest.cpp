#include "tilq/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tilq {

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_path;
    j["n_steps"] = n_steps;
    j["n_paths"] = n_paths;
    j["base_seed"] = base_seed;
    j["eps_list"] = eps_list;
    j["t_list"] = t_list;
    j["tolerances"] = {{"prop_tol", prop_tol},
                       {"psd_slack", psd_slack},
                       {"cond_threshold", cond_threshold},
                       {"lambda_tol", lambda_tol},
                       {"div_guard", div_guard}};
    j["threads"] = threads;
    j["tool_version"] = tool_version;
    j["wall_clock_sec"] = wall_clock_sec;
    return j.dump(2) + "\n";
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json();
}

}  // namespace tilq
