#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace videofusion {

/// Weights of the five training terms. Defaults are the published training values.
struct LossWeights {
    double intensity = 15.0;
    double gradient = 1.0;
    double color = 100.0;
    double scene_fidelity = 10.0;
    double variational = 100.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

/**
 * How per-frame L1 means are reduced over time.
 *
 * `frame_mean` averages over frames (and transitions) so magnitudes do not grow with clip
 * length; `frame_sum` sums them, i.e. a 1/(HW) normalization summed over t.
 */
enum class TemporalReduction { frame_mean, frame_sum };

struct LossOptions {
    TemporalReduction reduction = TemporalReduction::frame_mean;
};

/// |G_x| + |G_y| of 3x3 Sobel responses with reflect padding, per channel. Input T x C x H x W.
torch::Tensor sobel_magnitude(const torch::Tensor& frames);

/// Loss inputs take T x C x H x W tensors: fused and visible with 3 channels, infrared with 1.
torch::Tensor intensity_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const torch::Tensor& ir_clean,
                             const LossOptions& options = {});
torch::Tensor gradient_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const torch::Tensor& ir_clean,
                            const LossOptions& options = {});
torch::Tensor color_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const LossOptions& options = {});
torch::Tensor scene_fidelity_loss(const torch::Tensor& restored_ir, const torch::Tensor& restored_vi,
                                  const torch::Tensor& ir_clean, const torch::Tensor& vi_clean,
                                  const LossOptions& options = {});

/// Set by variational_consistency_loss when fewer than two frames make the term undefined.
struct LossStatus {
    std::vector<std::string> warnings;
};

torch::Tensor variational_consistency_loss(const torch::Tensor& fused, const torch::Tensor& restored_ir,
                                           const torch::Tensor& restored_vi, const torch::Tensor& ir_clean,
                                           const torch::Tensor& vi_clean, const LossOptions& options = {},
                                           LossStatus* status = nullptr);

struct LossInputs {
    torch::Tensor fused;
    torch::Tensor restored_ir;
    torch::Tensor restored_vi;
    torch::Tensor ir_clean;
    torch::Tensor vi_clean;
};

struct LossBreakdown {
    double intensity = 0.0;
    double gradient = 0.0;
    double color = 0.0;
    double scene_fidelity = 0.0;
    double variational = 0.0;
    double total = 0.0;
    /// Differentiable weighted total.
    torch::Tensor total_tensor;
    std::vector<std::string> warnings;
};

LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights, const LossOptions& options = {});

/// Weighted sum of already computed component values, for reporting and tests.
double weighted_total(const LossBreakdown& components, const LossWeights& weights);

} // namespace videofusion
