#include "videofusion/run_config.hpp"

#include <fstream>
#include <set>

#include "videofusion/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace videofusion {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string co_attention_name(CoAttentionMode m) { return m == CoAttentionMode::matmul ? "matmul" : "elementwise"; }

} // namespace

void to_json(json& j, const NetworkConfig& c) {
    j = json{{"channels", c.channels},
             {"depths", c.depths},
             {"bicam_count", c.bicam_count},
             {"heads", c.heads},
             {"train_window", c.train_window},
             {"window_partition", c.window_partition},
             {"ffn_expansion", c.ffn_expansion},
             {"ca_reduction", c.ca_reduction},
             {"sa_kernel", c.sa_kernel},
             {"decoder_depth", c.decoder_depth},
             {"co_attention", co_attention_name(c.co_attention)},
             {"use_bicam", c.use_bicam},
             {"use_cmdrm", c.use_cmdrm},
             {"use_cmgf", c.use_cmgf}};
}

void from_json(const json& j, NetworkConfig& c) {
    check_keys(j,
               {"channels", "depths", "bicam_count", "heads", "train_window", "window_partition", "ffn_expansion",
                "ca_reduction", "sa_kernel", "decoder_depth", "co_attention", "use_bicam", "use_cmdrm", "use_cmgf"},
               "network");
    read(j, "channels", c.channels);
    read(j, "depths", c.depths);
    read(j, "bicam_count", c.bicam_count);
    read(j, "heads", c.heads);
    read(j, "train_window", c.train_window);
    read(j, "window_partition", c.window_partition);
    read(j, "ffn_expansion", c.ffn_expansion);
    read(j, "ca_reduction", c.ca_reduction);
    read(j, "sa_kernel", c.sa_kernel);
    read(j, "decoder_depth", c.decoder_depth);
    if (j.contains("co_attention")) {
        const auto mode = j.at("co_attention").get<std::string>();
        if (mode == "elementwise") c.co_attention = CoAttentionMode::elementwise;
        else if (mode == "matmul") c.co_attention = CoAttentionMode::matmul;
        else throw ConfigError("co_attention must be 'elementwise' or 'matmul'");
    }
    read(j, "use_bicam", c.use_bicam);
    read(j, "use_cmdrm", c.use_cmdrm);
    read(j, "use_cmgf", c.use_cmgf);
}

void to_json(json& j, const LossWeights& w) {
    j = json{{"intensity", w.intensity},
             {"gradient", w.gradient},
             {"color", w.color},
             {"scene_fidelity", w.scene_fidelity},
             {"variational", w.variational}};
}

void from_json(const json& j, LossWeights& w) {
    check_keys(j, {"intensity", "gradient", "color", "scene_fidelity", "variational"}, "loss_weights");
    read(j, "intensity", w.intensity);
    read(j, "gradient", w.gradient);
    read(j, "color", w.color);
    read(j, "scene_fidelity", w.scene_fidelity);
    read(j, "variational", w.variational);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"base_lr", c.base_lr},
             {"final_lr", c.final_lr},
             {"betas", c.betas},
             {"weight_decay", c.weight_decay},
             {"batch_size", c.batch_size},
             {"train_window", c.train_window},
             {"window_stride", c.window_stride},
             {"seed", c.seed},
             {"loss_weights", c.loss_weights},
             {"loss_reduction", c.loss_options.reduction == TemporalReduction::frame_sum ? "frame_sum" : "frame_mean"},
             {"ablation", c.ablation.names()},
             {"resample_degradation", c.resample_degradation},
             {"checkpoint_every", c.checkpoint_every},
             {"validation_window", c.validation_window}};
}

void from_json(const json& j, TrainConfig& c) {
    check_keys(j,
               {"epochs", "base_lr", "final_lr", "betas", "weight_decay", "batch_size", "train_window", "window_stride",
                "seed", "loss_weights", "loss_reduction", "ablation", "resample_degradation", "checkpoint_every",
                "validation_window"},
               "train");
    read(j, "epochs", c.epochs);
    read(j, "base_lr", c.base_lr);
    read(j, "final_lr", c.final_lr);
    read(j, "betas", c.betas);
    read(j, "weight_decay", c.weight_decay);
    read(j, "batch_size", c.batch_size);
    read(j, "train_window", c.train_window);
    c.window_stride = c.train_window;
    read(j, "window_stride", c.window_stride);
    read(j, "seed", c.seed);
    read(j, "loss_weights", c.loss_weights);
    if (j.contains("loss_reduction")) {
        const auto r = j.at("loss_reduction").get<std::string>();
        if (r == "frame_mean") c.loss_options.reduction = TemporalReduction::frame_mean;
        else if (r == "frame_sum") c.loss_options.reduction = TemporalReduction::frame_sum;
        else throw ConfigError("loss_reduction must be 'frame_mean' or 'frame_sum'");
    }
    if (j.contains("ablation")) c.ablation = AblationFlags::parse(j.at("ablation").get<std::vector<std::string>>());
    read(j, "resample_degradation", c.resample_degradation);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "validation_window", c.validation_window);
}

void to_json(json& j, const DegradationSpec& s) {
    j = json{{"blur_kernel_size", s.blur_kernel_size},
             {"blur_sigma_range", s.blur_sigma_range},
             {"stripe_amplitude_range", s.stripe_amplitude_range},
             {"stripe_temporal_correlation", s.stripe_temporal_correlation},
             {"seed", s.seed},
             {"identity", s.identity}};
}

void from_json(const json& j, DegradationSpec& s) {
    check_keys(j,
               {"blur_kernel_size", "blur_sigma_range", "stripe_amplitude_range", "stripe_temporal_correlation", "seed",
                "identity"},
               "degradation");
    read(j, "blur_kernel_size", s.blur_kernel_size);
    read(j, "blur_sigma_range", s.blur_sigma_range);
    read(j, "stripe_amplitude_range", s.stripe_amplitude_range);
    read(j, "stripe_temporal_correlation", s.stripe_temporal_correlation);
    read(j, "seed", s.seed);
    read(j, "identity", s.identity);
}

void to_json(json& j, const RunConfig& c) {
    auto paths = [](const std::vector<fs::path>& v) {
        std::vector<std::string> out;
        for (const auto& p : v) out.push_back(p.string());
        return out;
    };
    j = json{{"network", c.network},
             {"train", c.train},
             {"degradation", c.degradation},
             {"dataset", paths(c.dataset)},
             {"validation", paths(c.validation)},
             {"run_dir", c.run_dir.string()}};
    if (c.max_steps) j["max_steps"] = *c.max_steps;
}

void RunConfig::validate(bool check_paths) const {
    network.validate();
    train.validate();
    degradation.validate();
    if (max_steps && *max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (check_paths) {
        if (dataset.empty()) throw ConfigError("dataset is empty");
        for (const auto* list : {&dataset, &validation}) {
            for (const auto& p : *list) {
                if (!fs::is_directory(p)) throw ConfigError("dataset path does not exist: " + p.string());
            }
        }
    }
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        check_keys(j, {"network", "train", "degradation", "dataset", "validation", "run_dir", "max_steps"}, "config");
        read(j, "network", c.network);
        read(j, "train", c.train);
        read(j, "degradation", c.degradation);
        auto resolve = [&](const std::string& p) {
            fs::path path(p);
            return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        };
        if (j.contains("dataset")) {
            for (const auto& p : j.at("dataset").get<std::vector<std::string>>()) c.dataset.push_back(resolve(p));
        }
        if (j.contains("validation")) {
            for (const auto& p : j.at("validation").get<std::vector<std::string>>()) c.validation.push_back(resolve(p));
        }
        if (j.contains("run_dir")) c.run_dir = resolve(j.at("run_dir").get<std::string>());
        if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<int64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.train.degradation = c.degradation;
    c.validate(false);
    if (c.network.train_window != c.train.train_window) {
        throw ConfigError("network.train_window and train.train_window disagree");
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

} // namespace videofusion
