#include "videofusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "videofusion/error.hpp"
#include "videofusion/metrics.hpp"
#include "videofusion/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace videofusion {

namespace {

struct AblationName {
    const char* name;
    bool AblationFlags::*flag;
};

constexpr AblationName kAblationNames[] = {
    {"bicam", &AblationFlags::no_bicam},       {"cmdrm", &AblationFlags::no_cmdrm},
    {"cmgf", &AblationFlags::cmgf_simple_sum}, {"int", &AblationFlags::no_intensity},
    {"grad", &AblationFlags::no_gradient},     {"color", &AblationFlags::no_color},
    {"sf", &AblationFlags::no_scene_fidelity}, {"var", &AblationFlags::no_variational},
};

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

torch::Tensor string_tensor(const std::string& s) {
    auto t = torch::empty({static_cast<int64_t>(s.size())}, torch::kUInt8);
    std::copy(s.begin(), s.end(), reinterpret_cast<char*>(t.data_ptr<uint8_t>()));
    return t;
}

std::string tensor_string(const torch::Tensor& t) {
    auto c = t.contiguous();
    const auto* p = reinterpret_cast<const char*>(c.data_ptr<uint8_t>());
    return std::string(p, p + c.numel());
}

torch::Tensor read_tensor(torch::serialize::InputArchive& archive, const std::string& key) {
    torch::Tensor t;
    if (!archive.try_read(key, t)) throw DataError("checkpoint is missing '" + key + "'");
    return t;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& archive) {
    CheckpointMeta meta;
    meta.format_version = read_tensor(archive, "meta/format_version").item<int64_t>();
    if (meta.format_version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint format version " + std::to_string(meta.format_version) +
                        " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    try {
        meta.network = json::parse(tensor_string(read_tensor(archive, "meta/network_config"))).get<NetworkConfig>();
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint network config is unreadable: ") + e.what());
    }
    meta.train_config_json = tensor_string(read_tensor(archive, "meta/train_config"));
    meta.step = read_tensor(archive, "meta/step").item<int64_t>();
    return meta;
}

void open_archive(torch::serialize::InputArchive& archive, const fs::path& path) {
    if (!fs::is_regular_file(path)) throw DataError("checkpoint not found: " + path.string());
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw DataError("checkpoint " + path.string() + " is corrupt or unreadable");
    }
}

/// Smallest extent >= n whose three pyramid levels are each tiled by the attention window.
int64_t tiled_extent(int64_t n, int64_t window) {
    auto fits = [window](int64_t m) {
        if (m % 4 != 0) return false;
        for (int64_t side : {m, m / 2, m / 4}) {
            if (window > 0 && side > window && side % window != 0) return false;
        }
        return true;
    };
    int64_t m = n;
    while (!fits(m)) ++m;
    return m;
}

Clip slice_clip(const Clip& clip, int64_t start, int64_t length) {
    return Clip{clip.data.narrow(0, start, length), clip.frame_rate, clip.modality};
}

} // namespace

AblationFlags AblationFlags::parse(const std::vector<std::string>& names) {
    AblationFlags flags;
    for (const auto& raw : names) {
        std::string name = raw;
        if (name.rfind("no_", 0) == 0) name = name.substr(3);
        auto it = std::find_if(std::begin(kAblationNames), std::end(kAblationNames),
                               [&](const AblationName& a) { return name == a.name; });
        if (it == std::end(kAblationNames)) {
            throw ConfigError("unknown ablation '" + raw + "' (expected bicam, cmdrm, cmgf, int, grad, color, sf, var)");
        }
        flags.*(it->flag) = true;
    }
    return flags;
}

std::vector<std::string> AblationFlags::names() const {
    std::vector<std::string> out;
    for (const auto& a : kAblationNames) {
        if (this->*(a.flag)) out.emplace_back(a.name);
    }
    return out;
}

AblatedConfig apply_ablation(const NetworkConfig& network, const LossWeights& weights, const AblationFlags& flags) {
    AblatedConfig out{network, weights};
    if (flags.no_bicam) out.network.use_bicam = false;
    if (flags.no_cmdrm) out.network.use_cmdrm = false;
    if (flags.cmgf_simple_sum) out.network.use_cmgf = false;
    if (flags.no_intensity) out.weights.intensity = 0.0;
    if (flags.no_gradient) out.weights.gradient = 0.0;
    if (flags.no_color) out.weights.color = 0.0;
    if (flags.no_scene_fidelity) out.weights.scene_fidelity = 0.0;
    if (flags.no_variational) out.weights.variational = 0.0;
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(base_lr > 0.0) || !(final_lr >= 0.0)) throw ConfigError("learning rates must be positive");
    for (double b : betas) {
        if (!(b >= 0.0 && b < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train_window < 1) throw ConfigError("train_window must be >= 1");
    if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (validation_window < 1) throw ConfigError("validation_window must be >= 1");
    degradation.validate();
    loss_weights.validate();
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr, double final_lr) {
    if (total_steps <= 1) return base_lr;
    const double s = static_cast<double>(std::clamp<int64_t>(step, 0, total_steps - 1));
    const double progress = s / static_cast<double>(total_steps - 1);
    return final_lr + (base_lr - final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

void checkpoint_save(const fs::path& path, VideoFusionNet& net, int64_t step, const std::string& train_config_json,
                     torch::optim::AdamW* optimizer) {
    torch::serialize::OutputArchive archive;
    archive.write("meta/format_version", torch::tensor(kCheckpointVersion, torch::kInt64));
    archive.write("meta/network_config", string_tensor(json(net->config()).dump()));
    archive.write("meta/train_config", string_tensor(train_config_json));
    archive.write("meta/step", torch::tensor(step, torch::kInt64));
    for (const auto& p : net->named_parameters()) archive.write("params/" + p.key(), p.value().detach());
    for (const auto& b : net->named_buffers()) archive.write("params/" + b.key(), b.value(), true);
    if (optimizer != nullptr) {
        // Written by parameter position; libtorch's own serializer keys state by tensor address,
        // which makes otherwise identical runs produce different files.
        archive.write("optimizer/present", torch::tensor(int64_t{1}));
        int64_t index = 0;
        for (auto& group : optimizer->param_groups()) {
            for (auto& p : group.params()) {
                const auto key = "optimizer/" + std::to_string(index++) + "/";
                auto it = optimizer->state().find(p.unsafeGetTensorImpl());
                if (it == optimizer->state().end()) continue;
                auto& state = static_cast<torch::optim::AdamWParamState&>(*it->second);
                archive.write(key + "step", torch::tensor(state.step(), torch::kInt64), true);
                archive.write(key + "exp_avg", state.exp_avg(), true);
                archive.write(key + "exp_avg_sq", state.exp_avg_sq(), true);
            }
        }
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

CheckpointMeta checkpoint_meta(const fs::path& path) {
    torch::serialize::InputArchive archive;
    open_archive(archive, path);
    return read_meta(archive);
}

LoadedCheckpoint checkpoint_load(const fs::path& path, const std::optional<NetworkConfig>& expected,
                                 torch::optim::AdamW* optimizer) {
    torch::serialize::InputArchive archive;
    open_archive(archive, path);
    LoadedCheckpoint out;
    out.meta = read_meta(archive);
    if (expected && !(*expected == out.meta.network)) {
        throw ConfigError("checkpoint network config " + json(out.meta.network).dump() +
                          " does not match the requested config " + json(*expected).dump());
    }
    out.net = VideoFusionNet(out.meta.network);
    torch::NoGradGuard no_grad;
    auto restore = [&](const std::string& name, torch::Tensor& target) {
        auto value = read_tensor(archive, "params/" + name);
        if (!value.sizes().equals(target.sizes())) throw DataError("checkpoint tensor '" + name + "' has wrong shape");
        target.copy_(value);
    };
    for (auto& p : out.net->named_parameters()) restore(p.key(), p.value());
    for (auto& b : out.net->named_buffers()) restore(b.key(), b.value());
    if (optimizer != nullptr) {
        torch::Tensor marker;
        if (!archive.try_read("optimizer/present", marker, true)) throw DataError("checkpoint has no optimizer state");
        optimizer->state().clear();
        int64_t index = 0;
        for (auto& group : optimizer->param_groups()) {
            for (auto& p : group.params()) {
                const auto key = "optimizer/" + std::to_string(index++) + "/";
                torch::Tensor step;
                if (!archive.try_read(key + "step", step, true)) continue;
                auto state = std::make_unique<torch::optim::AdamWParamState>();
                state->step(step.item<int64_t>());
                auto moment = [&](const std::string& name) {
                    auto t = read_tensor(archive, key + name);
                    if (!t.sizes().equals(p.sizes())) throw DataError("optimizer state '" + key + name + "' has wrong shape");
                    return t.to(p.dtype()).clone();
                };
                state->exp_avg(moment("exp_avg"));
                state->exp_avg_sq(moment("exp_avg_sq"));
                optimizer->state()[p.unsafeGetTensorImpl()] = std::move(state);
            }
        }
    }
    return out;
}

FusionOutput fuse_video(VideoFusionNet& net, const ClipPair& pair, int64_t window) {
    if (window < 1) throw ConfigError("fusion window must be >= 1");
    torch::NoGradGuard no_grad;
    const bool was_training = net->is_training();
    net->eval();

    const auto t = pair.frames(), h = pair.ir.height(), w = pair.ir.width();
    const auto part = net->config().window_partition;
    const auto hp = tiled_extent(h, part), wp = tiled_extent(w, part);
    auto pad = [&](const torch::Tensor& x) {
        auto y = x.to(torch::kFloat32);
        if (hp == h && wp == w) return y;
        return torch::nn::functional::pad(y, torch::nn::functional::PadFuncOptions({0, wp - w, 0, hp - h})
                                                 .mode(torch::kReplicate));
    };
    auto ir = pad(pair.ir.data);
    auto vi = pad(pair.vi.data);

    auto fused = torch::empty({t, 3, hp, wp});
    auto r_ir = torch::empty({t, 1, hp, wp});
    auto r_vi = torch::empty({t, 3, hp, wp});
    int64_t filled = 0;
    for (auto start : window_starts(t, window, window)) {
        const auto len = std::min(window, t - start);
        auto out = net->forward(ir.narrow(0, start, len), vi.narrow(0, start, len));
        const auto skip = filled - start;
        if (skip >= len) continue;
        fused.narrow(0, filled, len - skip).copy_(out.fused.narrow(0, skip, len - skip));
        r_ir.narrow(0, filled, len - skip).copy_(out.restored_ir.narrow(0, skip, len - skip));
        r_vi.narrow(0, filled, len - skip).copy_(out.restored_vi.narrow(0, skip, len - skip));
        filled = start + len;
    }
    if (was_training) net->train();

    auto crop = [&](const torch::Tensor& x) { return x.narrow(2, 0, h).narrow(3, 0, w).contiguous(); };
    const double fps = pair.ir.frame_rate;
    return FusionOutput{Clip::make(crop(fused), Modality::fused, fps), Clip::make(crop(r_ir), Modality::infrared, fps),
                        Clip::make(crop(r_vi), Modality::visible, fps)};
}

Trainer::Trainer(std::vector<ClipPair> dataset, const NetworkConfig& network, TrainConfig config,
                 std::optional<fs::path> run_dir)
    : dataset_(std::move(dataset)), config_(std::move(config)), run_dir_(std::move(run_dir)) {
    config_.validate();
    network.validate();
    if (dataset_.empty()) throw ConfigError("training dataset is empty");
    auto ablated = apply_ablation(network, config_.loss_weights, config_.ablation);
    network_config_ = ablated.network;
    weights_ = ablated.weights;

    for (size_t i = 0; i < dataset_.size(); ++i) {
        for (auto s : window_starts(dataset_[i].frames(), config_.train_window, config_.window_stride)) {
            windows_.push_back({i, s});
        }
    }
    const auto n = static_cast<int64_t>(windows_.size());
    steps_per_epoch_ = (n + config_.batch_size - 1) / config_.batch_size;

    torch::manual_seed(config_.seed);
    net_ = VideoFusionNet(network_config_);
    net_->train();
    optimizer_ = std::make_unique<torch::optim::AdamW>(
        net_->parameters(), torch::optim::AdamWOptions(config_.base_lr)
                                .betas({config_.betas[0], config_.betas[1]})
                                .weight_decay(config_.weight_decay));

    if (run_dir_) {
        fs::create_directories(*run_dir_);
        std::ofstream(*run_dir_ / "config.json")
            << json{{"network", network_config_}, {"train", config_}, {"windows", n}}.dump(2) << "\n";
    }
}

void Trainer::resume(const fs::path& checkpoint) {
    auto loaded = checkpoint_load(checkpoint, network_config_, optimizer_.get());
    torch::NoGradGuard no_grad;
    auto src = loaded.net->named_parameters();
    for (auto& p : net_->named_parameters()) p.value().copy_(src[p.key()]);
    auto src_buffers = loaded.net->named_buffers();
    for (auto& b : net_->named_buffers()) b.value().copy_(src_buffers[b.key()]);
    step_ = loaded.meta.step;
}

std::pair<ClipPair, ClipPair> Trainer::training_pair(int64_t epoch, size_t slot) {
    std::vector<size_t> order(windows_.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(derive_seed(config_.seed, 1, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    const auto index = order[slot];
    const auto& ref = windows_[index];
    const auto& clip = dataset_[ref.clip];
    const auto len = std::min(config_.train_window, clip.frames());
    ClipPair clean{slice_clip(clip.ir, ref.start, len), slice_clip(clip.vi, ref.start, len), clip.scene_id};
    auto spec = config_.degradation;
    const auto visit = config_.resample_degradation ? static_cast<std::uint64_t>(epoch) : 0;
    spec.seed = derive_seed(config_.seed, 2 + visit, index);
    auto degraded = degrade_pair(clean, spec);
    return {std::move(clean), std::move(degraded)};
}

StepRecord Trainer::step() {
    if (step_ >= total_steps()) throw ConfigError("training schedule already finished");
    const auto epoch = step_ / steps_per_epoch_;
    const auto first_slot = static_cast<size_t>((step_ % steps_per_epoch_) * config_.batch_size);
    const auto last_slot = std::min(first_slot + static_cast<size_t>(config_.batch_size), windows_.size());
    const auto count = static_cast<double>(last_slot - first_slot);

    const double lr = cosine_lr(step_, total_steps(), config_.base_lr, config_.final_lr);
    for (auto& group : optimizer_->param_groups()) {
        static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }
    optimizer_->zero_grad();

    StepRecord record;
    record.step = step_;
    record.epoch = epoch;
    record.lr = lr;
    for (size_t slot = first_slot; slot < last_slot; ++slot) {
        auto [clean, degraded] = training_pair(epoch, slot);

        auto ir_clean = clean.ir.data.to(torch::kFloat32), vi_clean = clean.vi.data.to(torch::kFloat32);
        auto out = net_->forward(degraded.ir.data.to(torch::kFloat32), degraded.vi.data.to(torch::kFloat32));
        auto loss =
            total_loss(LossInputs{out.fused, out.restored_ir, out.restored_vi, ir_clean, vi_clean}, weights_,
                       config_.loss_options);
        if (!std::isfinite(loss.total)) {
            json diag{{"event", "non_finite_loss"}, {"step", step_},       {"epoch", epoch},
                      {"scene", clean.scene_id},    {"intensity", loss.intensity}, {"gradient", loss.gradient},
                      {"color", loss.color},        {"scene_fidelity", loss.scene_fidelity},
                      {"variational", loss.variational}};
            std::cerr << diag.dump() << "\n";
            log_line(diag.dump());
            throw NumericError("non-finite loss at step " + std::to_string(step_));
        }
        if (loss.total_tensor.requires_grad()) (loss.total_tensor / count).backward();

        record.loss.intensity += loss.intensity / count;
        record.loss.gradient += loss.gradient / count;
        record.loss.color += loss.color / count;
        record.loss.scene_fidelity += loss.scene_fidelity / count;
        record.loss.variational += loss.variational / count;
        record.loss.total += loss.total / count;
        for (auto& w : loss.warnings) {
            if (std::find(record.loss.warnings.begin(), record.loss.warnings.end(), w) == record.loss.warnings.end()) {
                record.loss.warnings.push_back(w);
            }
        }
    }
    optimizer_->step();
    ++step_;

    log_line(json{{"event", "step"},
                  {"step", record.step},
                  {"epoch", record.epoch},
                  {"lr", record.lr},
                  {"loss", record.loss.total},
                  {"intensity", record.loss.intensity},
                  {"gradient", record.loss.gradient},
                  {"color", record.loss.color},
                  {"scene_fidelity", record.loss.scene_fidelity},
                  {"variational", record.loss.variational},
                  {"warnings", record.loss.warnings}}
                 .dump());
    if (step_ % steps_per_epoch_ == 0) end_of_epoch(epoch);
    return record;
}

std::vector<StepRecord> Trainer::run(std::optional<int64_t> max_steps) {
    std::vector<StepRecord> records;
    const auto stop = max_steps ? std::min(total_steps(), step_ + *max_steps) : total_steps();
    while (step_ < stop) records.push_back(step());
    return records;
}

void Trainer::save_checkpoint(const fs::path& path) {
    checkpoint_save(path, net_, step_, json(config_).dump(), optimizer_.get());
}

void Trainer::end_of_epoch(int64_t epoch) {
    if (!run_dir_) return;
    if ((epoch + 1) % config_.checkpoint_every == 0 || step_ == total_steps()) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_epoch_%03lld.pt", static_cast<long long>(epoch + 1));
        save_checkpoint(*run_dir_ / name);
    }
    for (size_t i = 0; i < validation_.size(); ++i) {
        const auto& full = validation_[i];
        const auto len = std::min(config_.validation_window, full.frames());
        ClipPair clean{slice_clip(full.ir, 0, len), slice_clip(full.vi, 0, len), full.scene_id};
        auto spec = config_.degradation;
        spec.seed = derive_seed(config_.seed, 3, i);
        auto degraded = degrade_pair(clean, spec);
        auto fused = fuse_video(net_, degraded, config_.train_window);
        auto report = metrics::evaluate_video(fused.fused, clean.ir, clean.vi);
        json line{{"event", "validation"},
                  {"epoch", epoch},
                  {"step", step_},
                  {"scene", full.scene_id},
                  {"en", report.means.en},
                  {"mi", report.means.mi},
                  {"sd", report.means.sd},
                  {"ssim", report.means.ssim},
                  {"vif", report.means.vif}};
        if (report.flow_d) line["flow_d"] = *report.flow_d;
        log_line(line.dump());
        if (i == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "epoch_%03lld", static_cast<long long>(epoch + 1));
            save_clip(fused.fused, *run_dir_ / "samples" / name, full.scene_id);
        }
    }
}

void Trainer::log_line(const std::string& json_line) {
    if (!run_dir_) return;
    std::ofstream(*run_dir_ / "train_log.jsonl", std::ios::app) << json_line << "\n";
}

} // namespace videofusion
