// videofusion: train / fuse / eval / degrade over frame-directory clips.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "videofusion/degradation.hpp"
#include "videofusion/error.hpp"
#include "videofusion/metrics.hpp"
#include "videofusion/network.hpp"
#include "videofusion/run_config.hpp"
#include "videofusion/training.hpp"
#include "videofusion/video.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace videofusion;

namespace {

constexpr const char* kRunRootEnv = "VIDEOFUSION_RUN_ROOT";

enum Exit : int { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

ClipPair load_aligned(const fs::path& ir_path, const fs::path& vi_path) {
    auto ir = load_clip(ir_path, Modality::infrared);
    auto vi = load_clip(vi_path, Modality::visible);
    std::string scene = ir_path.filename().string() == "ir" ? ir_path.parent_path().filename().string()
                                                            : ir_path.stem().string();
    return ClipPair::make(std::move(ir), std::move(vi), scene);
}

fs::path resolve_run_dir(const RunConfig& config, const fs::path& config_path, const std::string& cli_run_dir) {
    const char* env = std::getenv(kRunRootEnv);
    fs::path root = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
    if (!cli_run_dir.empty()) return cli_run_dir;
    if (!config.run_dir.empty()) return config.run_dir;
    return root / config_path.stem();
}

struct TrainArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> ablate;
    bool dry_run = false;
    std::string run_dir;
    std::optional<int64_t> max_steps;
    std::string resume;
};

int cmd_train(const TrainArgs& args) {
    auto config = load_run_config(args.config);
    if (args.seed) {
        config.train.seed = *args.seed;
        config.degradation.seed = *args.seed;
        config.train.degradation.seed = *args.seed;
    }
    if (!args.ablate.empty()) {
        auto extra = AblationFlags::parse(args.ablate);
        auto names = config.train.ablation.names();
        for (const auto& n : extra.names()) names.push_back(n);
        config.train.ablation = AblationFlags::parse(names);
    }
    if (args.max_steps) config.max_steps = *args.max_steps;

    auto ablated = apply_ablation(config.network, config.train.loss_weights, config.train.ablation);
    if (args.dry_run) {
        config.validate(false);
        VideoFusionNet net(ablated.network);
        json echo = config;
        echo["effective_network"] = ablated.network;
        echo["effective_loss_weights"] = ablated.weights;
        echo["parameters"] = count_parameters(*net);
        std::cout << echo.dump(2) << "\n";
        return kOk;
    }
    config.validate(true);
    if (!args.resume.empty() && !fs::is_regular_file(args.resume)) {
        throw ConfigError("resume checkpoint does not exist: " + args.resume);
    }

    std::vector<ClipPair> dataset, validation;
    for (const auto& dir : config.dataset) dataset.push_back(load_pair(dir));
    for (const auto& dir : config.validation) validation.push_back(load_pair(dir));

    const auto run_dir = resolve_run_dir(config, args.config, args.run_dir);
    Trainer trainer(std::move(dataset), config.network, config.train, run_dir);
    trainer.set_validation(std::move(validation));
    if (!args.resume.empty()) trainer.resume(args.resume);
    write_text(run_dir / "run_config.json", json(config).dump(2) + "\n");

    std::cerr << "training " << trainer.total_steps() << " steps (" << trainer.steps_per_epoch()
              << " per epoch), " << count_parameters(*trainer.net()) << " parameters, run dir " << run_dir.string()
              << "\n";
    auto records = trainer.run(config.max_steps);
    trainer.save_checkpoint(run_dir / "ckpt_last.pt");
    if (!records.empty()) {
        std::cerr << "step " << records.back().step + 1 << " loss " << records.back().loss.total << "\n";
    }
    return kOk;
}

struct FuseArgs {
    std::string checkpoint, ir, vi, pair, out;
    int64_t window = 25;
};

int cmd_fuse(const FuseArgs& args) {
    if (args.window < 1) throw ConfigError("--window must be >= 1");
    if (args.pair.empty() && (args.ir.empty() || args.vi.empty())) {
        throw ConfigError("give either --pair or both --ir and --vi");
    }
    const auto pair = args.pair.empty() ? load_aligned(args.ir, args.vi) : load_pair(args.pair);
    auto loaded = checkpoint_load(args.checkpoint);
    auto out = fuse_video(loaded.net, pair, args.window);
    const fs::path dir(args.out);
    save_clip(out.fused, dir / "fused", pair.scene_id);
    save_clip(out.restored_ir, dir / "restored_ir", pair.scene_id);
    save_clip(out.restored_vi, dir / "restored_vi", pair.scene_id);
    std::cerr << "fused " << out.fused.frames() << " frames into " << dir.string() << "\n";
    return kOk;
}

struct EvalArgs {
    std::string fused, ir, vi, report, csv, vif_norm = "sum";
    std::optional<int64_t> profile;
};

int cmd_eval(const EvalArgs& args) {
    metrics::EvaluationOptions options;
    if (args.vif_norm == "sum") options.vif_normalization = metrics::VifNormalization::sum;
    else if (args.vif_norm == "mean") options.vif_normalization = metrics::VifNormalization::mean;
    else throw ConfigError("--vif-normalization must be 'sum' or 'mean'");
    options.profile_column = args.profile;

    auto fused = load_clip(args.fused, Modality::fused);
    auto sources = load_aligned(args.ir, args.vi);
    if (fused.frames() != sources.frames() || fused.height() != sources.ir.height() ||
        fused.width() != sources.ir.width()) {
        throw DataError("fused clip is not aligned with the sources");
    }
    if (args.profile && (*args.profile < 0 || *args.profile >= fused.width())) {
        throw ConfigError("--profile column " + std::to_string(*args.profile) + " is outside the frame");
    }
    auto report = metrics::evaluate_video(fused, sources.ir, sources.vi, options);
    write_text(args.report, metrics::report_to_json(report, sources.scene_id) + "\n");
    if (!args.csv.empty()) write_text(args.csv, metrics::report_to_csv(report));
    if (report.column_profile) {
        const fs::path base = fs::path(args.report).replace_extension();
        auto strip = quantize_u8(report.column_profile->strip.transpose(0, 1).contiguous()).contiguous();
        cv::Mat image(static_cast<int>(strip.size(0)), static_cast<int>(strip.size(1)), CV_8UC1, strip.data_ptr());
        cv::imwrite(base.string() + "_profile.png", image);
        std::ostringstream csv;
        csv << "transition,variation\n";
        csv.precision(17);
        for (size_t t = 0; t < report.column_profile->variation.size(); ++t) {
            csv << t << "," << report.column_profile->variation[t] << "\n";
        }
        write_text(base.string() + "_profile.csv", csv.str());
    }
    const auto& m = report.means;
    std::cout << "EN " << m.en << "  MI " << m.mi << "  SD " << m.sd << "  SSIM " << m.ssim << "  VIF " << m.vif
              << "  flowD " << (report.flow_d ? std::to_string(*report.flow_d) : std::string("n/a")) << "\n";
    return kOk;
}

struct DegradeArgs {
    std::string config, in, out;
    std::optional<std::uint64_t> seed;
};

int cmd_degrade(const DegradeArgs& args) {
    DegradationSpec spec;
    if (!args.config.empty()) spec = load_run_config(args.config).degradation;
    if (args.seed) spec.seed = *args.seed;
    spec.validate();

    auto pair = load_pair(args.in);
    auto degraded = degrade_pair(pair, spec);
    const fs::path out(args.out);
    save_pair(degraded, out);
    json manifest{{"seed", spec.seed},
                  {"spec", spec},
                  {"passthrough", spec.identity},
                  {"stripe_passthrough", spec.identity || spec.stripe_is_passthrough()},
                  {"source", fs::absolute(args.in).lexically_normal().string()},
                  {"checksums", {{"ir", clip_checksum(degraded.ir)}, {"vi", clip_checksum(degraded.vi)}}}};
    write_text(out / "degradation.json", manifest.dump(2) + "\n");
    std::cerr << "degraded " << pair.frames() << " frames with seed " << spec.seed << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Infrared-visible video fusion: train, fuse, evaluate and degrade clips."};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a network from a JSON run config");
    train_cmd->add_option("-c,--config", train.config, "Run config JSON")->required();
    train_cmd->add_option("--seed", train.seed, "Override the run seed");
    train_cmd->add_option("--ablate", train.ablate, "Ablations: bicam,cmdrm,cmgf,int,grad,color,sf,var")
        ->delimiter(',');
    train_cmd->add_flag("--dry-run", train.dry_run, "Print the resolved config and parameter count, then exit");
    train_cmd->add_option("--run-dir", train.run_dir,
                          std::string("Run directory (default: config run_dir, else $") + kRunRootEnv +
                              "/<config name>)");
    train_cmd->add_option("--max-steps", train.max_steps, "Stop after this many optimizer steps");
    train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");

    FuseArgs fuse;
    auto* fuse_cmd = app.add_subcommand("fuse", "Fuse and restore a clip pair with a checkpoint");
    fuse_cmd->add_option("--checkpoint", fuse.checkpoint, "Checkpoint file")->required();
    fuse_cmd->add_option("--ir", fuse.ir, "Infrared frame directory or video");
    fuse_cmd->add_option("--vi", fuse.vi, "Visible frame directory or video");
    fuse_cmd->add_option("--pair", fuse.pair, "Directory holding ir/ and vi/");
    fuse_cmd->add_option("-o,--out", fuse.out, "Output directory")->required();
    fuse_cmd->add_option("--window", fuse.window, "Frames per inference window")->capture_default_str();

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Compute fusion metrics for a fused clip");
    eval_cmd->add_option("--fused", eval.fused, "Fused frame directory")->required();
    eval_cmd->add_option("--ir", eval.ir, "Infrared source")->required();
    eval_cmd->add_option("--vi", eval.vi, "Visible source")->required();
    eval_cmd->add_option("-r,--report", eval.report, "Report JSON path")->required();
    eval_cmd->add_option("--csv", eval.csv, "Per-frame CSV path");
    eval_cmd->add_option("--profile", eval.profile, "Column for the temporal strip profile");
    eval_cmd->add_option("--vif-normalization", eval.vif_norm, "sum or mean")->capture_default_str();

    DegradeArgs degrade;
    auto* degrade_cmd = app.add_subcommand("degrade", "Apply synthetic blur and stripe noise to a clip pair");
    degrade_cmd->add_option("-c,--config", degrade.config, "Run config JSON (degradation section)");
    degrade_cmd->add_option("--in", degrade.in, "Clean pair directory (ir/, vi/)")->required();
    degrade_cmd->add_option("--out", degrade.out, "Output pair directory")->required();
    degrade_cmd->add_option("--seed", degrade.seed, "Override the degradation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train);
        if (*fuse_cmd) return cmd_fuse(fuse);
        if (*eval_cmd) return cmd_eval(eval);
        if (*degrade_cmd) return cmd_degrade(degrade);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
