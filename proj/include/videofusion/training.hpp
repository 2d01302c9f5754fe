#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "videofusion/degradation.hpp"
#include "videofusion/losses.hpp"
#include "videofusion/network.hpp"
#include "videofusion/video.hpp"

namespace videofusion {

/// "Without X" switches for ablation runs.
struct AblationFlags {
    bool no_bicam = false;
    bool no_cmdrm = false;
    bool cmgf_simple_sum = false;
    bool no_intensity = false;
    bool no_gradient = false;
    bool no_color = false;
    bool no_scene_fidelity = false;
    bool no_variational = false;

    /// Accepts: bicam, cmdrm, cmgf, int, grad, color, sf, var.
    static AblationFlags parse(const std::vector<std::string>& names);
    std::vector<std::string> names() const;
    bool operator==(const AblationFlags&) const = default;
};

struct AblatedConfig {
    NetworkConfig network;
    LossWeights weights;
};

AblatedConfig apply_ablation(const NetworkConfig& network, const LossWeights& weights, const AblationFlags& flags);

struct TrainConfig {
    int64_t epochs = 20;
    double base_lr = 1e-4;
    double final_lr = 1e-5;
    std::array<double, 2> betas{0.9, 0.999};
    double weight_decay = 1e-4;
    /// Windows per optimizer step (gradients accumulated one clip at a time).
    int64_t batch_size = 1;
    int64_t train_window = 7;
    int64_t window_stride = 7;
    std::uint64_t seed = 0;
    /// Degradation model applied to clean windows. Its own seed is replaced per window.
    DegradationSpec degradation;
    LossWeights loss_weights;
    LossOptions loss_options;
    AblationFlags ablation;
    /// Draw a fresh degradation for every window visit instead of one per window.
    bool resample_degradation = true;
    /// Epochs between checkpoints when a run directory is set.
    int64_t checkpoint_every = 1;
    int64_t validation_window = 25;

    void validate() const;
};

/// lr(s) = final + (base - final)(1 + cos(pi s / (S - 1))) / 2 over S steps; exact at both ends.
double cosine_lr(int64_t step, int64_t total_steps, double base_lr, double final_lr);

struct StepRecord {
    int64_t step = 0;
    int64_t epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

struct CheckpointMeta {
    int64_t format_version = 0;
    NetworkConfig network;
    int64_t step = 0;
    std::string train_config_json;
};

inline constexpr int64_t kCheckpointVersion = 1;

/// Writes parameters, configs, step and (optionally) optimizer state; atomic via rename.
void checkpoint_save(const std::filesystem::path& path, VideoFusionNet& net, int64_t step,
                     const std::string& train_config_json, torch::optim::AdamW* optimizer = nullptr);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    VideoFusionNet net{nullptr};
};

/// Restores a network. When `expected` is given its config must match the stored one.
LoadedCheckpoint checkpoint_load(const std::filesystem::path& path,
                                 const std::optional<NetworkConfig>& expected = std::nullopt,
                                 torch::optim::AdamW* optimizer = nullptr);

CheckpointMeta checkpoint_meta(const std::filesystem::path& path);

/// Fuses a clip pair of any length with windows of `window` frames; the clamped tail window
/// only fills frames not already produced. Frames are edge-padded to a size the attention
/// windows tile and cropped back.
FusionOutput fuse_video(VideoFusionNet& net, const ClipPair& pair, int64_t window);

/**
 * Training loop over a dataset of clean clip pairs.
 *
 * Every step windows clean pairs, degrades them deterministically from (seed, epoch, window),
 * runs the network on the degraded inputs and minimises the weighted loss against the clean
 * sources with AdamW under a cosine schedule. The data order and degradations depend only on
 * the seed and the step index, so a run resumed from a checkpoint replays the same trace.
 */
class Trainer {
public:
    Trainer(std::vector<ClipPair> dataset, const NetworkConfig& network, TrainConfig config,
            std::optional<std::filesystem::path> run_dir = std::nullopt);

    /// Resumes network, optimizer state and step counter from a checkpoint.
    void resume(const std::filesystem::path& checkpoint);

    StepRecord step();
    /// Runs until `max_steps` more steps have been taken or the schedule ends.
    std::vector<StepRecord> run(std::optional<int64_t> max_steps = std::nullopt);

    void set_validation(std::vector<ClipPair> clips) { validation_ = std::move(clips); }

    int64_t current_step() const { return step_; }
    int64_t total_steps() const { return steps_per_epoch_ * config_.epochs; }
    int64_t steps_per_epoch() const { return steps_per_epoch_; }
    const NetworkConfig& network_config() const { return network_config_; }
    const LossWeights& loss_weights() const { return weights_; }
    VideoFusionNet& net() { return net_; }
    torch::optim::AdamW& optimizer() { return *optimizer_; }

    void save_checkpoint(const std::filesystem::path& path);

private:
    struct WindowRef {
        size_t clip = 0;
        int64_t start = 0;
    };

    /// Clean window and its degraded copy for one slot of an epoch's shuffled order.
    std::pair<ClipPair, ClipPair> training_pair(int64_t epoch, size_t slot);
    void end_of_epoch(int64_t epoch);
    void log_line(const std::string& json_line);

    std::vector<ClipPair> dataset_;
    std::vector<ClipPair> validation_;
    std::vector<WindowRef> windows_;
    NetworkConfig network_config_;
    TrainConfig config_;
    LossWeights weights_;
    std::optional<std::filesystem::path> run_dir_;
    VideoFusionNet net_{nullptr};
    std::unique_ptr<torch::optim::AdamW> optimizer_;
    int64_t steps_per_epoch_ = 0;
    int64_t step_ = 0;
};

/// Deterministic 64-bit mix of a seed with stream indices (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

} // namespace videofusion
