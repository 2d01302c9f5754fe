#pragma once

// Scripted scene synthesizer. The checked-in fixture under tests/fixtures/scene25 was written by
// make_fixtures from synth_pair(25, 64, 64); fixtures.json records its checksums.

#include <cmath>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "videofusion/network.hpp"
#include "videofusion/video.hpp"

namespace vf_test {

inline std::filesystem::path fixture_dir() { return VF_FIXTURE_DIR; }
inline std::filesystem::path scene25_dir() { return fixture_dir() / "scene25"; }

/// Camera pans one pixel per frame; a warm pedestrian (hot in infrared, dark in visible) walks
/// right at two pixels per frame; a static hot vent sits in the corner. `variant` shifts phases
/// and colors so different clips are distinguishable.
inline videofusion::ClipPair synth_pair(int64_t frames, int64_t height, int64_t width, int variant = 0,
                                        const std::string& scene = "synth") {
    const double two_pi = 2.0 * M_PI;
    auto ir = torch::empty({frames, 1, height, width}, torch::kFloat32);
    auto vi = torch::empty({frames, 3, height, width}, torch::kFloat32);
    auto ira = ir.accessor<float, 4>();
    auto via = vi.accessor<float, 4>();
    const double phase = 0.7 * variant;
    for (int64_t t = 0; t < frames; ++t) {
        const double cx = 8.0 + 2.0 * t + 5.0 * variant, cy = height * 0.55;
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                const double u = static_cast<double>(x + t), v = static_cast<double>(y);
                const double tex = std::sin(two_pi * u / 11.0 + phase) * std::cos(two_pi * v / 7.0);
                const double ramp = v / static_cast<double>(height);
                const double dx = (x - cx) / 3.0, dy = (y - cy) / 7.0;
                const double body = std::exp(-(dx * dx + dy * dy));
                const bool vent = x >= width - 10 && y < 8;

                double t_ir = 0.25 + 0.15 * ramp + 0.05 * std::sin(two_pi * u / 23.0) + 0.6 * body;
                if (vent) t_ir = 0.9;
                ira[t][0][y][x] = static_cast<float>(std::clamp(t_ir, 0.0, 1.0));

                const double shade = 1.0 - 0.7 * body;
                const double r = (0.45 + 0.2 * tex + 0.1 * ramp) * shade;
                const double g = (0.40 + 0.15 * std::sin(two_pi * u / 17.0 + phase) + 0.15 * ramp) * shade;
                const double b = (0.50 - 0.2 * ramp + 0.1 * tex + 0.05 * variant) * shade;
                via[t][0][y][x] = static_cast<float>(std::clamp(r, 0.0, 1.0));
                via[t][1][y][x] = static_cast<float>(std::clamp(g, 0.0, 1.0));
                via[t][2][y][x] = static_cast<float>(std::clamp(b, 0.0, 1.0));
            }
        }
    }
    using videofusion::Clip;
    using videofusion::Modality;
    return videofusion::ClipPair::make(Clip::make(ir, Modality::infrared), Clip::make(vi, Modality::visible), scene);
}

/// Reference fused clip for metric fixtures: visible colors with luma replaced by max(Y_vi, ir).
inline videofusion::Clip synth_fused(const videofusion::ClipPair& pair) {
    auto ycc = videofusion::rgb_to_ycbcr(pair.vi.data);
    auto y = torch::maximum(ycc.narrow(1, 0, 1), pair.ir.data);
    auto rgb = videofusion::ycbcr_to_rgb(torch::cat({y, ycc.narrow(1, 1, 2)}, 1)).clamp(0.0, 1.0);
    return videofusion::Clip::make(rgb, videofusion::Modality::fused, pair.vi.frame_rate);
}

/// Reduced-width network used by the smoke tests.
inline videofusion::NetworkConfig toy_config() {
    videofusion::NetworkConfig c;
    c.channels = {8, 16, 32};
    return c;
}

/// Cheapest configuration that still exercises every module, for 16x16 inputs.
inline videofusion::NetworkConfig tiny_config() {
    videofusion::NetworkConfig c;
    c.channels = {4, 8, 16};
    c.depths = {1, 1, 1};
    c.decoder_depth = 1;
    c.heads = 2;
    c.window_partition = 4;
    return c;
}

} // namespace vf_test
