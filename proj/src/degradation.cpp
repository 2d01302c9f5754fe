#include "videofusion/degradation.hpp"

#include <cmath>

#include "videofusion/error.hpp"

namespace F = torch::nn::functional;

namespace videofusion {

void DegradationSpec::validate() const {
    if (blur_kernel_size < 3 || blur_kernel_size % 2 == 0) {
        throw ConfigError("blur_kernel_size must be odd and >= 3");
    }
    if (!(blur_sigma_range[0] > 0.0) || blur_sigma_range[0] > blur_sigma_range[1]) {
        throw ConfigError("blur_sigma_range must satisfy 0 < low <= high");
    }
    if (stripe_amplitude_range[0] < 0.0 || stripe_amplitude_range[0] > stripe_amplitude_range[1]) {
        throw ConfigError("stripe_amplitude_range must satisfy 0 <= low <= high");
    }
    if (!(stripe_temporal_correlation >= 0.0 && stripe_temporal_correlation <= 1.0)) {
        throw ConfigError("stripe_temporal_correlation must lie in [0,1]");
    }
}

torch::Tensor gaussian_kernel1d(int64_t size, double sigma, torch::ScalarType dtype) {
    auto x = torch::arange(size, torch::kFloat64) - static_cast<double>(size / 2);
    auto k = torch::exp(-(x * x) / (2.0 * sigma * sigma));
    return (k / k.sum()).to(dtype);
}

torch::Tensor gaussian_blur(const torch::Tensor& frames, int64_t kernel_size, double sigma) {
    if (frames.size(-1) < kernel_size || frames.size(-2) < kernel_size) {
        throw DataError("blur kernel (" + std::to_string(kernel_size) + ") larger than frame " +
                        std::to_string(frames.size(-2)) + "x" + std::to_string(frames.size(-1)));
    }
    const auto t = frames.size(0), c = frames.size(1), h = frames.size(2), w = frames.size(3);
    const int64_t pad = kernel_size / 2;
    auto taps = gaussian_kernel1d(kernel_size, sigma, frames.scalar_type());
    auto x = frames.reshape({t * c, 1, h, w});
    x = F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
    x = F::conv2d(x, taps.view({1, 1, 1, kernel_size}));
    x = F::conv2d(x, taps.view({1, 1, kernel_size, 1}));
    return x.reshape({t, c, h, w}).clamp(0.0, 1.0);
}

Clip gaussian_blur_clip(const Clip& clip, const DegradationSpec& spec, Rng& rng) {
    spec.validate();
    std::uniform_real_distribution<double> sigma_dist(spec.blur_sigma_range[0], spec.blur_sigma_range[1]);
    const double sigma = spec.blur_sigma_range[0] == spec.blur_sigma_range[1] ? spec.blur_sigma_range[0]
                                                                              : sigma_dist(rng);
    return Clip{gaussian_blur(clip.data, spec.blur_kernel_size, sigma), clip.frame_rate, clip.modality};
}

torch::Tensor stripe_offsets(int64_t frames, int64_t width, const DegradationSpec& spec, Rng& rng) {
    spec.validate();
    const auto [lo, hi] = spec.stripe_amplitude_range;
    std::uniform_real_distribution<double> amp_dist(lo, hi);
    const double amplitude = lo == hi ? lo : amp_dist(rng);
    const double rho = spec.stripe_temporal_correlation;
    const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    auto offsets = torch::zeros({frames, width}, torch::kFloat64);
    auto acc = offsets.accessor<double, 2>();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int64_t c = 0; c < width; ++c) acc[0][c] = amplitude * normal(rng);
    for (int64_t t = 1; t < frames; ++t) {
        for (int64_t c = 0; c < width; ++c) {
            // Stationary AR(1): the marginal standard deviation stays at `amplitude`.
            const double eps = rho < 1.0 ? normal(rng) : 0.0;
            acc[t][c] = rho * acc[t - 1][c] + amplitude * innovation * eps;
        }
    }
    return offsets;
}

Clip stripe_noise_clip(const Clip& clip, const DegradationSpec& spec, Rng& rng) {
    auto offsets = stripe_offsets(clip.frames(), clip.width(), spec, rng).to(clip.data.scalar_type());
    auto noisy = clip.data + offsets.view({clip.frames(), 1, 1, clip.width()});
    return Clip{noisy.clamp(0.0, 1.0), clip.frame_rate, clip.modality};
}

ClipPair degrade_pair(const ClipPair& pair, const DegradationSpec& spec) {
    spec.validate();
    if (spec.identity) return pair;
    Rng rng(spec.seed);
    auto vi = gaussian_blur_clip(pair.vi, spec, rng);
    auto ir = stripe_noise_clip(pair.ir, spec, rng);
    return ClipPair{std::move(ir), std::move(vi), pair.scene_id};
}

} // namespace videofusion
