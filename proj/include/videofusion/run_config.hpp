#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "videofusion/degradation.hpp"
#include "videofusion/network.hpp"
#include "videofusion/training.hpp"

namespace videofusion {

/// Everything a CLI run needs, loaded from one JSON file.
struct RunConfig {
    NetworkConfig network;
    TrainConfig train;
    DegradationSpec degradation;
    /// Scene directories, each holding `ir/` and `vi/` frame directories.
    std::vector<std::filesystem::path> dataset;
    std::vector<std::filesystem::path> validation;
    std::filesystem::path run_dir;
    /// Stop after this many optimizer steps (schedule still spans all epochs).
    std::optional<int64_t> max_steps;

    /// Checks value ranges; with `check_paths`, also that dataset directories exist.
    void validate(bool check_paths) const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DegradationSpec& s);
void from_json(const nlohmann::json& j, DegradationSpec& s);
void to_json(nlohmann::json& j, const RunConfig& c);

/// Parses and validates a config document. Unknown keys are rejected. Relative paths are
/// resolved against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace videofusion
