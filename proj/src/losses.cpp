#include "videofusion/losses.hpp"

#include "videofusion/error.hpp"
#include "videofusion/video.hpp"

namespace F = torch::nn::functional;

namespace videofusion {

namespace {

void check_frames(const torch::Tensor& t, int64_t channels, const char* name) {
    if (t.dim() != 4 || t.size(1) != channels) {
        throw DataError(std::string(name) + " must be T x " + std::to_string(channels) + " x H x W, got " +
                        c10::str(t.sizes()));
    }
}

void check_same_grid(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.size(0) != b.size(0) || a.size(2) != b.size(2) || a.size(3) != b.size(3)) {
        throw DataError(std::string(what) + ": T/H/W mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
    }
}

// Mean absolute difference per frame (over C, H, W) -> T.
torch::Tensor l1_per_frame(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean({1, 2, 3}); }

torch::Tensor reduce(const torch::Tensor& per_frame, const LossOptions& options) {
    return options.reduction == TemporalReduction::frame_sum ? per_frame.sum() : per_frame.mean();
}

torch::Tensor temporal_diff(const torch::Tensor& x) { return x.narrow(0, 1, x.size(0) - 1) - x.narrow(0, 0, x.size(0) - 1); }

} // namespace

void LossWeights::validate() const {
    for (double w : {intensity, gradient, color, scene_fidelity, variational}) {
        if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
    }
}

torch::Tensor sobel_magnitude(const torch::Tensor& frames) {
    const auto t = frames.size(0), c = frames.size(1), h = frames.size(2), w = frames.size(3);
    auto opts = torch::TensorOptions().dtype(frames.scalar_type()).device(frames.device());
    auto gx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts).view({1, 1, 3, 3});
    auto gy = gx.transpose(2, 3).contiguous();
    auto x = F::pad(frames.reshape({t * c, 1, h, w}), F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect));
    auto mag = F::conv2d(x, gx).abs() + F::conv2d(x, gy).abs();
    return mag.reshape({t, c, h, w});
}

torch::Tensor intensity_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const torch::Tensor& ir_clean,
                             const LossOptions& options) {
    check_frames(fused, 3, "fused");
    check_frames(vi_clean, 3, "visible");
    check_frames(ir_clean, 1, "infrared");
    check_same_grid(fused, vi_clean, "intensity_loss");
    check_same_grid(fused, ir_clean, "intensity_loss");
    auto target = torch::maximum(luma(vi_clean), ir_clean);
    return reduce(l1_per_frame(luma(fused), target), options);
}

torch::Tensor gradient_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const torch::Tensor& ir_clean,
                            const LossOptions& options) {
    check_frames(fused, 3, "fused");
    check_frames(vi_clean, 3, "visible");
    check_frames(ir_clean, 1, "infrared");
    check_same_grid(fused, vi_clean, "gradient_loss");
    check_same_grid(fused, ir_clean, "gradient_loss");
    auto target = torch::maximum(sobel_magnitude(luma(vi_clean)), sobel_magnitude(ir_clean));
    return reduce(l1_per_frame(sobel_magnitude(luma(fused)), target), options);
}

torch::Tensor color_loss(const torch::Tensor& fused, const torch::Tensor& vi_clean, const LossOptions& options) {
    check_frames(fused, 3, "fused");
    check_frames(vi_clean, 3, "visible");
    check_same_grid(fused, vi_clean, "color_loss");
    auto chroma = [](const torch::Tensor& rgb) { return rgb_to_ycbcr(rgb).narrow(1, 1, 2); };
    return reduce(l1_per_frame(chroma(fused), chroma(vi_clean)), options);
}

torch::Tensor scene_fidelity_loss(const torch::Tensor& restored_ir, const torch::Tensor& restored_vi,
                                  const torch::Tensor& ir_clean, const torch::Tensor& vi_clean,
                                  const LossOptions& options) {
    check_frames(restored_ir, 1, "restored infrared");
    check_frames(ir_clean, 1, "infrared");
    check_frames(restored_vi, 3, "restored visible");
    check_frames(vi_clean, 3, "visible");
    check_same_grid(restored_ir, ir_clean, "scene_fidelity_loss");
    check_same_grid(restored_vi, vi_clean, "scene_fidelity_loss");
    auto ir_term = l1_per_frame(restored_ir, ir_clean) +
                   l1_per_frame(sobel_magnitude(restored_ir), sobel_magnitude(ir_clean));
    auto vi_term = l1_per_frame(restored_vi, vi_clean) +
                   l1_per_frame(sobel_magnitude(luma(restored_vi)), sobel_magnitude(luma(vi_clean)));
    return reduce(ir_term + vi_term, options);
}

torch::Tensor variational_consistency_loss(const torch::Tensor& fused, const torch::Tensor& restored_ir,
                                           const torch::Tensor& restored_vi, const torch::Tensor& ir_clean,
                                           const torch::Tensor& vi_clean, const LossOptions& options,
                                           LossStatus* status) {
    check_frames(fused, 3, "fused");
    check_frames(restored_ir, 1, "restored infrared");
    check_frames(restored_vi, 3, "restored visible");
    check_frames(ir_clean, 1, "infrared");
    check_frames(vi_clean, 3, "visible");
    check_same_grid(fused, ir_clean, "variational_consistency_loss");
    check_same_grid(fused, vi_clean, "variational_consistency_loss");
    check_same_grid(restored_ir, ir_clean, "variational_consistency_loss");
    check_same_grid(restored_vi, vi_clean, "variational_consistency_loss");
    if (fused.size(0) < 2) {
        if (status) status->warnings.push_back("variational consistency loss needs T >= 2; defined as 0");
        return (fused.sum() * 0.0);
    }
    auto d_fused = temporal_diff(luma(fused));
    auto d_ir = temporal_diff(ir_clean);
    auto d_vi = temporal_diff(vi_clean);
    auto per_transition = l1_per_frame(d_fused, d_ir) + l1_per_frame(d_fused, luma(d_vi)) +
                          l1_per_frame(temporal_diff(restored_ir), d_ir) +
                          l1_per_frame(temporal_diff(restored_vi), d_vi);
    return reduce(per_transition, options);
}

LossBreakdown total_loss(const LossInputs& in, const LossWeights& weights, const LossOptions& options) {
    weights.validate();
    LossStatus status;
    auto l_int = intensity_loss(in.fused, in.vi_clean, in.ir_clean, options);
    auto l_grad = gradient_loss(in.fused, in.vi_clean, in.ir_clean, options);
    auto l_color = color_loss(in.fused, in.vi_clean, options);
    auto l_sf = scene_fidelity_loss(in.restored_ir, in.restored_vi, in.ir_clean, in.vi_clean, options);
    auto l_var = variational_consistency_loss(in.fused, in.restored_ir, in.restored_vi, in.ir_clean, in.vi_clean,
                                              options, &status);

    LossBreakdown out;
    out.total_tensor = weights.intensity * l_int + weights.gradient * l_grad + weights.color * l_color +
                       weights.scene_fidelity * l_sf + weights.variational * l_var;
    out.intensity = l_int.item<double>();
    out.gradient = l_grad.item<double>();
    out.color = l_color.item<double>();
    out.scene_fidelity = l_sf.item<double>();
    out.variational = l_var.item<double>();
    out.total = out.total_tensor.item<double>();
    out.warnings = std::move(status.warnings);
    return out;
}

double weighted_total(const LossBreakdown& c, const LossWeights& w) {
    return w.intensity * c.intensity + w.gradient * c.gradient + w.color * c.color + w.scene_fidelity * c.scene_fidelity +
           w.variational * c.variational;
}

} // namespace videofusion
