#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support/synth.hpp"
#include "videofusion/error.hpp"
#include "videofusion/run_config.hpp"
#include "videofusion/training.hpp"

using namespace videofusion;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("vf_test_training_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TrainConfig tiny_train(int64_t epochs = 3) {
    TrainConfig c;
    c.epochs = epochs;
    c.train_window = 3;
    c.window_stride = 3;
    c.base_lr = 1e-3;
    c.final_lr = 1e-4;
    c.seed = 11;
    c.validation_window = 3;
    return c;
}

NetworkConfig tiny_net() {
    auto n = vf_test::tiny_config();
    n.train_window = 3;
    return n;
}

std::vector<ClipPair> tiny_data() { return {vf_test::synth_pair(6, 16, 16, 0, "a"), vf_test::synth_pair(3, 16, 16, 1, "b")}; }

std::vector<double> totals(const std::vector<StepRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) out.push_back(r.loss.total);
    return out;
}

} // namespace

TEST(Schedule, CosineEndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-4, 1e-5), 1e-4);
    EXPECT_DOUBLE_EQ(cosine_lr(99, 100, 1e-4, 1e-5), 1e-5);
    EXPECT_NEAR(cosine_lr(50, 101, 1e-4, 1e-5), 5.5e-5, 1e-15);
    EXPECT_DOUBLE_EQ(cosine_lr(500, 100, 1e-4, 1e-5), 1e-5);
    EXPECT_DOUBLE_EQ(cosine_lr(0, 1, 1e-4, 1e-5), 1e-4);
    for (int s = 1; s < 100; ++s) EXPECT_LE(cosine_lr(s, 100, 1e-4, 1e-5), cosine_lr(s - 1, 100, 1e-4, 1e-5));
}

TEST(Ablation, ParseNamesAndApply) {
    auto flags = AblationFlags::parse({"bicam", "no_var", "cmgf"});
    EXPECT_TRUE(flags.no_bicam);
    EXPECT_TRUE(flags.no_variational);
    EXPECT_TRUE(flags.cmgf_simple_sum);
    EXPECT_FALSE(flags.no_cmdrm);
    EXPECT_EQ(AblationFlags::parse(flags.names()), flags);
    EXPECT_THROW(AblationFlags::parse({"attention"}), ConfigError);
    auto a = apply_ablation(NetworkConfig{}, LossWeights{}, flags);
    EXPECT_FALSE(a.network.use_bicam);
    EXPECT_FALSE(a.network.use_cmgf);
    EXPECT_TRUE(a.network.use_cmdrm);
    EXPECT_EQ(a.weights.variational, 0.0);
    EXPECT_EQ(a.weights.intensity, 15.0);
}

TEST(Seeds, DeriveSeedSeparatesStreams) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}

TEST(Checkpoint, RoundTripAndMismatches) {
    auto dir = scratch("ckpt");
    torch::manual_seed(4);
    VideoFusionNet net(tiny_net());
    checkpoint_save(dir / "a.pt", net, 17, R"({"seed":1})");
    EXPECT_FALSE(fs::exists(dir / "a.pt.tmp"));
    auto meta = checkpoint_meta(dir / "a.pt");
    EXPECT_EQ(meta.format_version, kCheckpointVersion);
    EXPECT_EQ(meta.step, 17);
    EXPECT_EQ(meta.network, tiny_net());
    EXPECT_EQ(meta.train_config_json, R"({"seed":1})");

    auto loaded = checkpoint_load(dir / "a.pt", tiny_net());
    auto pa = net->named_parameters(), pb = loaded.net->named_parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (const auto& kv : pa) EXPECT_TRUE(torch::equal(kv.value(), pb[kv.key()])) << kv.key();

    auto other = tiny_net();
    other.heads = 4;
    EXPECT_THROW(checkpoint_load(dir / "a.pt", other), ConfigError);

    {
        std::ofstream junk(dir / "junk.pt", std::ios::binary);
        junk << "not a checkpoint";
    }
    EXPECT_THROW(checkpoint_load(dir / "junk.pt"), DataError);
    EXPECT_THROW(checkpoint_meta(dir / "missing.pt"), DataError);
}

TEST(Fuse, WindowsCoverEveryFrameOnce) {
    torch::manual_seed(5);
    VideoFusionNet net(tiny_net());
    auto pair = vf_test::synth_pair(8, 16, 16);
    auto out = fuse_video(net, pair, 3);
    ASSERT_EQ(out.fused.frames(), 8);
    EXPECT_TRUE(net->is_training());
    // Windows start at 0, 3, 5; the last only contributes frames 6 and 7.
    net->eval();
    torch::NoGradGuard g;
    auto expect_window = [&](int64_t start, int64_t from, int64_t to) {
        auto ref = net->forward(pair.ir.data.narrow(0, start, 3), pair.vi.data.narrow(0, start, 3));
        for (int64_t t = from; t < to; ++t) {
            EXPECT_TRUE(torch::equal(out.fused.data[t], ref.fused[t - start])) << "frame " << t;
            EXPECT_TRUE(torch::equal(out.restored_ir.data[t], ref.restored_ir[t - start])) << "frame " << t;
        }
    };
    expect_window(0, 0, 3);
    expect_window(3, 3, 6);
    expect_window(5, 6, 8);
}

TEST(Fuse, PadsUntiledFrameSizes) {
    torch::manual_seed(6);
    VideoFusionNet net(tiny_net());
    auto pair = vf_test::synth_pair(4, 18, 22);
    auto out = fuse_video(net, pair, 7);
    EXPECT_EQ(out.fused.data.sizes(), (std::vector<int64_t>{4, 3, 18, 22}));
    EXPECT_EQ(out.restored_vi.data.sizes(), (std::vector<int64_t>{4, 3, 18, 22}));
    EXPECT_THROW(fuse_video(net, pair, 0), ConfigError);
}

TEST(Trainer, StepsPerEpochAndLogging) {
    auto dir = scratch("log");
    Trainer trainer(tiny_data(), tiny_net(), tiny_train(2), dir);
    // Windows: clip a has starts 0 and 3, clip b has 0.
    EXPECT_EQ(trainer.steps_per_epoch(), 3);
    EXPECT_EQ(trainer.total_steps(), 6);
    auto records = trainer.run(4);
    ASSERT_EQ(records.size(), 4u);
    EXPECT_DOUBLE_EQ(records[0].lr, 1e-3);
    EXPECT_EQ(records[3].epoch, 1);
    for (const auto& r : records) EXPECT_TRUE(std::isfinite(r.loss.total));
    EXPECT_TRUE(fs::exists(dir / "config.json"));
    EXPECT_TRUE(fs::exists(dir / "ckpt_epoch_001.pt"));
    std::ifstream log(dir / "train_log.jsonl");
    int steps = 0;
    for (std::string line; std::getline(log, line);) {
        auto j = json::parse(line);
        if (j["event"] == "step") ++steps;
    }
    EXPECT_EQ(steps, 4);
}

TEST(Trainer, SameSeedSameTrace) {
    Trainer a(tiny_data(), tiny_net(), tiny_train());
    Trainer b(tiny_data(), tiny_net(), tiny_train());
    EXPECT_EQ(totals(a.run(3)), totals(b.run(3)));
    auto other = tiny_train();
    other.seed = 12;
    Trainer c(tiny_data(), tiny_net(), other);
    Trainer d(tiny_data(), tiny_net(), tiny_train());
    EXPECT_NE(totals(c.run(2)), totals(d.run(2)));
}

TEST(Trainer, ResumeReplaysTheTrace) {
    auto dir = scratch("resume");
    Trainer full(tiny_data(), tiny_net(), tiny_train());
    auto reference = totals(full.run(7));

    Trainer first(tiny_data(), tiny_net(), tiny_train());
    auto head = totals(first.run(2));
    first.save_checkpoint(dir / "mid.pt");

    Trainer second(tiny_data(), tiny_net(), tiny_train());
    second.resume(dir / "mid.pt");
    EXPECT_EQ(second.current_step(), 2);
    auto tail = totals(second.run(5));
    head.insert(head.end(), tail.begin(), tail.end());
    EXPECT_EQ(head, reference);
}

TEST(Trainer, ResumeRejectsDifferentNetwork) {
    auto dir = scratch("resume_mismatch");
    Trainer a(tiny_data(), tiny_net(), tiny_train());
    a.save_checkpoint(dir / "a.pt");
    auto cfg = tiny_net();
    cfg.bicam_count = 1;
    Trainer b(tiny_data(), cfg, tiny_train());
    EXPECT_THROW(b.resume(dir / "a.pt"), ConfigError);
}

TEST(Trainer, InvalidInputs) {
    EXPECT_THROW(Trainer({}, tiny_net(), tiny_train()), ConfigError);
    auto bad = tiny_train();
    bad.batch_size = 0;
    EXPECT_THROW(Trainer(tiny_data(), tiny_net(), bad), ConfigError);
}

TEST(RunConfigParsing, DefaultsPathsAndErrors) {
    auto c = parse_run_config(json::parse(R"({"dataset": ["scenes/a"], "train": {"epochs": 2}})"), "/data/cfg");
    EXPECT_EQ(c.dataset.at(0), fs::path("/data/cfg/scenes/a"));
    EXPECT_EQ(c.train.epochs, 2);
    EXPECT_EQ(c.network, NetworkConfig{});

    EXPECT_THROW(parse_run_config(json::parse(R"({"trian": {}})")), ConfigError);
    EXPECT_THROW(parse_run_config(json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
    EXPECT_THROW(parse_run_config(json::parse(R"({"network": {"co_attention": "sum"}})")), ConfigError);
    EXPECT_THROW(parse_run_config(json::parse(R"({"network": {"train_window": 5}})")), ConfigError);
    EXPECT_THROW(parse_run_config(json::parse(R"({"train": {"ablation": ["nope"]}})")), ConfigError);

    auto missing = parse_run_config(json::parse(R"({"dataset": ["/nonexistent/vf/scene"]})"));
    try {
        missing.validate(true);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/vf/scene"), std::string::npos);
    }

    json round;
    to_json(round, c);
    auto again = parse_run_config(round);
    EXPECT_EQ(again.network, c.network);
    EXPECT_EQ(again.train.epochs, 2);
}
