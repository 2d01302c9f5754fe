#pragma once

#include <array>
#include <cstdint>
#include <random>

#include <torch/torch.h>

#include "videofusion/video.hpp"

namespace videofusion {

/**
 * Parameters of the synthetic training degradations: Gaussian blur on visible clips
 * and column-wise stripe nonuniformity on infrared clips.
 *
 * Defaults follow the training protocol (15-tap kernel, sigma in [0.9, 2.1]). The
 * stripe statistics are not pinned down by any reference model, so they are exposed here.
 */
struct DegradationSpec {
    int64_t blur_kernel_size = 15;
    std::array<double, 2> blur_sigma_range{0.9, 2.1};
    /// Standard deviation of the per-column offsets, drawn uniformly from this range per clip.
    std::array<double, 2> stripe_amplitude_range{0.02, 0.08};
    /// AR(1) coefficient of the offsets over time; 1 freezes the pattern.
    double stripe_temporal_correlation = 0.95;
    std::uint64_t seed = 0;
    /// Short-circuits degrade_pair to return its input unchanged.
    bool identity = false;

    void validate() const;
    bool stripe_is_passthrough() const { return stripe_amplitude_range[1] == 0.0; }
};

using Rng = std::mt19937_64;

/// Normalized 1-D Gaussian taps (the 2-D kernel is their outer product).
torch::Tensor gaussian_kernel1d(int64_t size, double sigma, torch::ScalarType dtype = torch::kFloat64);

/// Blurs every frame with a fixed sigma; reflect padding, output clamped to [0,1].
torch::Tensor gaussian_blur(const torch::Tensor& frames, int64_t kernel_size, double sigma);

/// Draws sigma once from the spec range and blurs the whole visible clip.
Clip gaussian_blur_clip(const Clip& clip, const DegradationSpec& spec, Rng& rng);

/// Column offsets b_c(t) as a T x W tensor (float64). Consumes the same draws as stripe_noise_clip.
torch::Tensor stripe_offsets(int64_t frames, int64_t width, const DegradationSpec& spec, Rng& rng);

/// Adds stripe_offsets to every row of an infrared clip and clamps to [0,1].
Clip stripe_noise_clip(const Clip& clip, const DegradationSpec& spec, Rng& rng);

/// Blurs the visible clip then stripes the infrared clip from one generator seeded with spec.seed.
ClipPair degrade_pair(const ClipPair& pair, const DegradationSpec& spec);

} // namespace videofusion
