#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "videofusion/error.hpp"
#include "videofusion/losses.hpp"
#include "videofusion/training.hpp"
#include "videofusion/video.hpp"

using namespace videofusion;
using torch::Tensor;
using vf_test::seeded_uniform;

namespace {

// ---- loop oracles on T x C x H x W float64 tensors ----

Tensor luma_oracle(const Tensor& rgb) {
    auto a = rgb.accessor<double, 4>();
    auto out = torch::zeros({rgb.size(0), 1, rgb.size(2), rgb.size(3)}, torch::kFloat64);
    auto o = out.accessor<double, 4>();
    for (int64_t t = 0; t < rgb.size(0); ++t)
        for (int64_t y = 0; y < rgb.size(2); ++y)
            for (int64_t x = 0; x < rgb.size(3); ++x)
                o[t][0][y][x] = 0.299 * a[t][0][y][x] + 0.587 * a[t][1][y][x] + 0.114 * a[t][2][y][x];
    return out;
}

Tensor chroma_oracle(const Tensor& rgb) {
    auto y = luma_oracle(rgb);
    auto cb = (rgb.narrow(1, 2, 1) - y) / 1.772 + 0.5;
    auto cr = (rgb.narrow(1, 0, 1) - y) / 1.402 + 0.5;
    return torch::cat({cb, cr}, 1);
}

int64_t reflect(int64_t i, int64_t n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); }

Tensor sobel_oracle(const Tensor& x) {
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    auto a = x.accessor<double, 4>();
    auto out = torch::zeros_like(x);
    auto o = out.accessor<double, 4>();
    const auto h = x.size(2), w = x.size(3);
    for (int64_t t = 0; t < x.size(0); ++t)
        for (int64_t c = 0; c < x.size(1); ++c)
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    double gx = 0, gy = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const double v = a[t][c][reflect(i + dy, h)][reflect(j + dx, w)];
                            gx += kx[dy + 1][dx + 1] * v;
                            gy += kx[dx + 1][dy + 1] * v;
                        }
                    o[t][c][i][j] = std::abs(gx) + std::abs(gy);
                }
    return out;
}

double l1_frame_mean(const Tensor& a, const Tensor& b) {
    double total = 0;
    for (int64_t t = 0; t < a.size(0); ++t) total += (a[t] - b[t]).abs().mean().item<double>();
    return total / static_cast<double>(a.size(0));
}

Tensor rnd(at::IntArrayRef shape, std::uint64_t seed) { return seeded_uniform(shape, seed, 0.05, 0.95); }

Tensor dt(const Tensor& x) { return x.narrow(0, 1, x.size(0) - 1) - x.narrow(0, 0, x.size(0) - 1); }

} // namespace

TEST(Sobel, VerticalStepEdge) {
    auto x = torch::zeros({1, 1, 4, 6}, torch::kFloat64);
    x.narrow(3, 3, 3).fill_(1.0);
    auto s = sobel_magnitude(x)[0][0];
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(s[i][j].item<double>(), (j == 2 || j == 3) ? 4.0 : 0.0);
    }
    auto r = rnd({2, 3, 5, 7}, 1);
    EXPECT_LE((sobel_magnitude(r) - sobel_oracle(r)).abs().max().item<double>(), 1e-12);
}

TEST(Intensity, ExactMaxIsZeroAndOffsetScales) {
    auto vi = rnd({3, 3, 4, 4}, 2), ir = rnd({3, 1, 4, 4}, 3);
    auto target = torch::maximum(luma(vi), ir);
    auto gray = [](const Tensor& y) { return y.expand({-1, 3, -1, -1}).contiguous(); };
    EXPECT_EQ(intensity_loss(gray(target), vi, ir).item<double>(), 0.0);
    auto shifted = gray(target * 0.8 + 0.1);
    // fused Y = target + 0.1 everywhere: 0.1 per frame, 0.1 * T under the summed convention.
    auto offset = gray(target + 0.1);
    LossOptions sum;
    sum.reduction = TemporalReduction::frame_sum;
    EXPECT_NEAR(intensity_loss(offset, vi, ir).item<double>(), 0.1, 1e-12);
    EXPECT_NEAR(intensity_loss(offset, vi, ir, sum).item<double>(), 0.3, 1e-12);
    EXPECT_GT(intensity_loss(shifted, vi, ir).item<double>(), 0.0);
}

TEST(Intensity, RandomFixtureOracle) {
    auto f = rnd({2, 3, 4, 4}, 4), vi = rnd({2, 3, 4, 4}, 5), ir = rnd({2, 1, 4, 4}, 6);
    const double expected = l1_frame_mean(luma_oracle(f), torch::maximum(luma_oracle(vi), ir));
    EXPECT_NEAR(intensity_loss(f, vi, ir).item<double>(), expected, 1e-12);
}

TEST(Gradient, ConstantClipsAndMatchedGradients) {
    auto c3 = torch::full({2, 3, 5, 5}, 0.3, torch::kFloat64), c1 = torch::full({2, 1, 5, 5}, 0.6, torch::kFloat64);
    EXPECT_LE(gradient_loss(c3, c3, c1).item<double>(), 1e-15);
    // Fused equals the visible clip whose gradients dominate a flat infrared clip everywhere.
    auto vi = rnd({2, 3, 5, 5}, 7);
    EXPECT_LE(gradient_loss(vi, vi, c1).item<double>(), 1e-15);
}

TEST(Gradient, StepEdgeAgainstFlatFused) {
    auto vi = torch::zeros({1, 3, 4, 6}, torch::kFloat64);
    vi.narrow(3, 3, 3).fill_(1.0);
    auto ir = torch::zeros({1, 1, 4, 6}, torch::kFloat64);
    auto fused = torch::full({1, 3, 4, 6}, 0.5, torch::kFloat64);
    // Two columns of response 4 out of six, flat fused: mean |0 - target| = 8 / 6.
    EXPECT_NEAR(gradient_loss(fused, vi, ir).item<double>(), 8.0 / 6.0, 1e-12);
    auto f = rnd({2, 3, 4, 4}, 8), v = rnd({2, 3, 4, 4}, 9), i = rnd({2, 1, 4, 4}, 10);
    const double expected =
        l1_frame_mean(sobel_oracle(luma_oracle(f)), torch::maximum(sobel_oracle(luma_oracle(v)), sobel_oracle(i)));
    EXPECT_NEAR(gradient_loss(f, v, i).item<double>(), expected, 1e-12);
}

TEST(Color, IdenticalAndAchromatic) {
    auto vi = rnd({2, 3, 4, 4}, 11);
    EXPECT_EQ(color_loss(vi, vi).item<double>(), 0.0);
    auto g1 = rnd({2, 1, 4, 4}, 12).expand({-1, 3, -1, -1}).contiguous();
    auto g2 = rnd({2, 1, 4, 4}, 13).expand({-1, 3, -1, -1}).contiguous();
    EXPECT_LE(color_loss(g1, g2).item<double>(), 1e-15);
}

TEST(Color, HueShiftedOracle) {
    auto vi = rnd({2, 3, 4, 4}, 14);
    auto shifted = torch::cat({vi.narrow(1, 1, 1), vi.narrow(1, 2, 1), vi.narrow(1, 0, 1)}, 1);
    const double expected = l1_frame_mean(chroma_oracle(shifted), chroma_oracle(vi));
    EXPECT_NEAR(color_loss(shifted, vi).item<double>(), expected, 1e-9);
    EXPECT_GT(expected, 0.0);
}

TEST(SceneFidelity, PerfectAndOffset) {
    auto ir = rnd({2, 1, 4, 4}, 15) * 0.9, vi = rnd({2, 3, 4, 4}, 16) * 0.9;
    EXPECT_EQ(scene_fidelity_loss(ir, vi, ir, vi).item<double>(), 0.0);
    // +0.05 everywhere: intensity terms give 0.05 per modality, Sobel terms vanish.
    EXPECT_NEAR(scene_fidelity_loss(ir + 0.05, vi + 0.05, ir, vi).item<double>(), 0.1, 1e-12);
}

TEST(SceneFidelity, FixtureOracle) {
    auto rir = rnd({3, 1, 4, 4}, 17), rvi = rnd({3, 3, 4, 4}, 18), ir = rnd({3, 1, 4, 4}, 19),
         vi = rnd({3, 3, 4, 4}, 20);
    const double expected = l1_frame_mean(rir, ir) + l1_frame_mean(sobel_oracle(rir), sobel_oracle(ir)) +
                            l1_frame_mean(rvi, vi) +
                            l1_frame_mean(sobel_oracle(luma_oracle(rvi)), sobel_oracle(luma_oracle(vi)));
    EXPECT_NEAR(scene_fidelity_loss(rir, rvi, ir, vi).item<double>(), expected, 1e-12);
}

TEST(Variational, StaticClipsAreZero) {
    auto f = rnd({1, 3, 4, 4}, 21).expand({4, -1, -1, -1}).contiguous();
    auto ri = rnd({1, 1, 4, 4}, 22).expand({4, -1, -1, -1}).contiguous();
    auto rv = rnd({1, 3, 4, 4}, 23).expand({4, -1, -1, -1}).contiguous();
    auto ir = rnd({1, 1, 4, 4}, 24).expand({4, -1, -1, -1}).contiguous();
    auto vi = rnd({1, 3, 4, 4}, 25).expand({4, -1, -1, -1}).contiguous();
    EXPECT_EQ(variational_consistency_loss(f, ri, rv, ir, vi).item<double>(), 0.0);
}

TEST(Variational, StaticFusedAgainstUniformMotion) {
    const int64_t t = 4;
    auto ramp = (torch::arange(t, torch::kFloat64) * 0.1).view({t, 1, 1, 1});
    auto ir = rnd({1, 1, 4, 4}, 26) * 0.5 + ramp;
    auto vi = rnd({1, 3, 4, 4}, 27) * 0.5 + ramp;
    auto fused = rnd({1, 3, 4, 4}, 28).expand({t, -1, -1, -1}).contiguous();
    // Restored streams follow the sources exactly; only the fused terms remain: 0.1 per modality.
    EXPECT_NEAR(variational_consistency_loss(fused, ir, vi, ir, vi).item<double>(), 0.2, 1e-12);
    LossOptions sum;
    sum.reduction = TemporalReduction::frame_sum;
    EXPECT_NEAR(variational_consistency_loss(fused, ir, vi, ir, vi, sum).item<double>(), 0.2 * (t - 1), 1e-12);
}

TEST(Variational, RandomFixtureOracle) {
    auto f = rnd({3, 3, 4, 4}, 29), ri = rnd({3, 1, 4, 4}, 30), rv = rnd({3, 3, 4, 4}, 31), ir = rnd({3, 1, 4, 4}, 32),
         vi = rnd({3, 3, 4, 4}, 33);
    auto yf = luma_oracle(f), yv = luma_oracle(vi);
    const double expected = l1_frame_mean(dt(yf), dt(ir)) + l1_frame_mean(dt(yf), dt(yv)) +
                            l1_frame_mean(dt(ri), dt(ir)) + l1_frame_mean(dt(rv), dt(vi));
    EXPECT_NEAR(variational_consistency_loss(f, ri, rv, ir, vi).item<double>(), expected, 1e-12);
}

TEST(Variational, SingleFrameWarns) {
    auto f = rnd({1, 3, 4, 4}, 34), i = rnd({1, 1, 4, 4}, 35);
    LossStatus status;
    EXPECT_EQ(variational_consistency_loss(f, i, f, i, f, {}, &status).item<double>(), 0.0);
    EXPECT_EQ(status.warnings.size(), 1u);
}

TEST(Total, WeightsAndBreakdown) {
    LossBreakdown unit;
    unit.intensity = unit.gradient = unit.color = unit.scene_fidelity = unit.variational = 1.0;
    EXPECT_DOUBLE_EQ(weighted_total(unit, LossWeights{}), 226.0);
    AblationFlags no_var;
    no_var.no_variational = true;
    auto ablated = apply_ablation(NetworkConfig{}, LossWeights{}, no_var);
    EXPECT_DOUBLE_EQ(weighted_total(unit, ablated.weights), 126.0);
    EXPECT_DOUBLE_EQ(weighted_total(LossBreakdown{}, LossWeights{}), 0.0);

    LossInputs in{rnd({3, 3, 4, 4}, 36), rnd({3, 1, 4, 4}, 37), rnd({3, 3, 4, 4}, 38), rnd({3, 1, 4, 4}, 39),
                  rnd({3, 3, 4, 4}, 40)};
    auto b = total_loss(in, LossWeights{});
    EXPECT_NEAR(b.total, weighted_total(b, LossWeights{}), 1e-6);
    for (double v : {b.intensity, b.gradient, b.color, b.scene_fidelity, b.variational}) EXPECT_GE(v, 0.0);

    LossInputs perfect{in.vi_clean, in.ir_clean, in.vi_clean, in.ir_clean, in.vi_clean};
    auto p = total_loss(perfect, LossWeights{});
    EXPECT_EQ(p.scene_fidelity, 0.0);
    EXPECT_EQ(p.color, 0.0);
}

TEST(Total, NegativeWeightRejected) {
    LossWeights w;
    w.gradient = -1;
    EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Losses, ShapeMismatchIsDataError) {
    EXPECT_THROW(intensity_loss(torch::zeros({2, 3, 4, 4}), torch::zeros({2, 3, 4, 4}), torch::zeros({3, 1, 4, 4})),
                 DataError);
    EXPECT_THROW(color_loss(torch::zeros({2, 1, 4, 4}), torch::zeros({2, 3, 4, 4})), DataError);
}
