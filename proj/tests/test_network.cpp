#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synth.hpp"
#include "videofusion/error.hpp"
#include "videofusion/network.hpp"

using namespace videofusion;
using torch::Tensor;

namespace {

std::vector<int64_t> dims(const Tensor& t) { return t.sizes().vec(); }

void zero_all(torch::nn::Module& m) {
    torch::NoGradGuard g;
    for (auto& p : m.parameters()) p.zero_();
}

} // namespace

TEST(Network, PublishedConfigParameterCount) {
    VideoFusionNet net(NetworkConfig{});
    const auto n = count_parameters(*net);
    EXPECT_EQ(n, 6550219);
    EXPECT_NEAR(static_cast<double>(n), 6.743e6, 0.15 * 6.743e6);
}

TEST(Network, PyramidShapesAtSixtyFour) {
    torch::manual_seed(0);
    VideoFusionNet net(NetworkConfig{});
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(7, 64, 64);
    auto [ir, vi] = net->encode(pair.ir.data, pair.vi.data);
    EXPECT_EQ(dims(ir.levels[0]), (std::vector<int64_t>{7, 32, 64, 64}));
    EXPECT_EQ(dims(ir.levels[1]), (std::vector<int64_t>{7, 64, 32, 32}));
    EXPECT_EQ(dims(ir.levels[2]), (std::vector<int64_t>{7, 128, 16, 16}));
    EXPECT_EQ(dims(vi.levels[2]), (std::vector<int64_t>{7, 128, 16, 16}));
}

TEST(Network, ZeroWeightsGiveZeroFeatures) {
    VideoFusionNet net(vf_test::tiny_config());
    zero_all(*net);
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(3, 16, 16);
    auto [ir, vi] = net->encode(pair.ir.data, pair.vi.data);
    for (const auto* p : {&ir, &vi}) {
        for (const auto& level : p->levels) EXPECT_EQ(level.abs().max().item<double>(), 0.0);
    }
}

TEST(Network, OutputShapesAndRange) {
    torch::manual_seed(1);
    VideoFusionNet net(vf_test::toy_config());
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(5, 32, 32);
    auto out = net->forward(pair);
    EXPECT_EQ(dims(out.fused.data), (std::vector<int64_t>{5, 3, 32, 32}));
    EXPECT_EQ(dims(out.restored_ir.data), (std::vector<int64_t>{5, 1, 32, 32}));
    EXPECT_EQ(dims(out.restored_vi.data), (std::vector<int64_t>{5, 3, 32, 32}));
    for (const auto* c : {&out.fused, &out.restored_ir, &out.restored_vi}) {
        EXPECT_GE(c->data.min().item<double>(), 0.0);
        EXPECT_LE(c->data.max().item<double>(), 1.0);
    }
}

TEST(Network, RepeatedForwardIsBitIdentical) {
    torch::manual_seed(2);
    VideoFusionNet net(vf_test::tiny_config());
    net->eval();
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(3, 16, 16);
    auto a = net->forward(pair.ir.data, pair.vi.data);
    auto b = net->forward(pair.ir.data, pair.vi.data);
    EXPECT_TRUE(torch::equal(a.fused, b.fused));
    EXPECT_TRUE(torch::equal(a.restored_ir, b.restored_ir));
    EXPECT_TRUE(torch::equal(a.restored_vi, b.restored_vi));
}

TEST(Network, CapturedAttentionMapsAreRowStochastic) {
    torch::manual_seed(3);
    VideoFusionNet net(vf_test::tiny_config());
    net->set_capture(true);
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(3, 16, 16);
    net->forward(pair.ir.data, pair.vi.data);
    auto maps = net->captured_attention();
    // 4 CmDRM + 3 CMGF (two maps each) + BiCAM layers (three maps per frame).
    EXPECT_GE(maps.size(), 4u + 6u + 3u);
    for (const auto& w : maps) {
        EXPECT_GE(w.min().item<double>(), 0.0);
        EXPECT_LE((w.sum(-1) - 1.0).abs().max().item<double>(), 1e-5);
    }
}

TEST(Network, AblatedFusionIsElementwiseSum) {
    auto cfg = vf_test::tiny_config();
    cfg.use_cmgf = false;
    VideoFusionNet net(cfg);
    auto a = vf_test::seeded_uniform({2, 4, 8, 8}, 4), b = vf_test::seeded_uniform({2, 4, 8, 8}, 5);
    EXPECT_TRUE(torch::equal(net->fuse_level(0, a, b), a + b));
    for (const auto& m : net->cmgf) EXPECT_TRUE(m.is_empty());
}

TEST(Network, AblationRemovesModules) {
    auto cfg = vf_test::tiny_config();
    const auto full = count_parameters(*VideoFusionNet(cfg));
    cfg.use_bicam = false;
    cfg.use_cmdrm = false;
    VideoFusionNet lean(cfg);
    EXPECT_LT(count_parameters(*lean), full);
    EXPECT_TRUE(lean->bicam.is_empty());
    torch::NoGradGuard g;
    auto pair = vf_test::synth_pair(2, 16, 16);
    EXPECT_EQ(dims(lean->forward(pair.ir.data, pair.vi.data).fused), (std::vector<int64_t>{2, 3, 16, 16}));
}

TEST(Network, InvalidConfigIsRejected) {
    auto cfg = vf_test::tiny_config();
    cfg.heads = 3;
    EXPECT_THROW(VideoFusionNet{cfg}, ConfigError);
    cfg = vf_test::tiny_config();
    cfg.channels = {8, 8, 16};
    EXPECT_THROW(VideoFusionNet{cfg}, ConfigError);
}

TEST(Network, FramesOutsideTheStackReachDoNotLeak) {
    // Receptive field of the temporal stage alone: with N = 2 layers, frame 0 ignores frame 5.
    auto frames = vf_test::seeded_uniform({6, 4, 4, 4}, 6);
    auto perturbed = frames.clone();
    perturbed[5] += 1.0;
    BiCAMStack stack(AttentionOptions(4).heads(2).ca_reduction(2).sa_kernel(3), 2);
    vf_test::pin_parameters(*stack, 7);
    auto diff = (stack(frames) - stack(perturbed)).abs().amax({1, 2, 3});
    EXPECT_EQ(diff[0].item<double>(), 0.0);
    EXPECT_EQ(diff[1].item<double>(), 0.0);
    EXPECT_EQ(diff[2].item<double>(), 0.0);
    EXPECT_GT(diff[3].item<double>(), 0.0);
    EXPECT_GT(diff[4].item<double>(), 0.0);
}
