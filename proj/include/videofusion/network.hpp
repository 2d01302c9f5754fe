#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "videofusion/blocks.hpp"
#include "videofusion/fusion_modules.hpp"
#include "videofusion/video.hpp"

namespace videofusion {

struct NetworkConfig {
    std::array<int64_t, 3> channels{32, 64, 128};
    /// Enhancement transformer blocks per scale.
    std::array<int64_t, 3> depths{2, 2, 4};
    int64_t bicam_count = 2;
    int64_t heads = 4;
    int64_t train_window = 7;
    int64_t window_partition = 8;
    double ffn_expansion = 2.0;
    int64_t ca_reduction = 8;
    int64_t sa_kernel = 7;
    /// Transformer blocks in each of the fusion / infrared / visible decoder heads.
    int64_t decoder_depth = 2;
    CoAttentionMode co_attention = CoAttentionMode::elementwise;

    // Ablation switches; a disabled module is not instantiated.
    bool use_bicam = true;
    bool use_cmdrm = true;
    bool use_cmgf = true;

    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

/// Multi-scale features of one modality: level n has shape T x C_n x H/2^n x W/2^n (n = 0, 1, 2).
struct FeaturePyramid {
    std::array<torch::Tensor, 3> levels;
    Modality modality = Modality::visible;
};

/// Raw network outputs, T x C x H x W, clamped to [0,1].
struct FusionTensors {
    torch::Tensor fused;
    torch::Tensor restored_ir;
    torch::Tensor restored_vi;
};

struct FusionOutput {
    Clip fused;
    Clip restored_ir;
    Clip restored_vi;
};

/// Shallow 3-D conv stem plus two (downsample, conv3d, ResBlock) stages for one modality.
class ModalityEncoderImpl : public torch::nn::Module {
public:
    ModalityEncoderImpl(int64_t in_channels, const std::array<int64_t, 3>& channels);
    torch::Tensor stem_forward(const torch::Tensor& frames);
    torch::Tensor stage_forward(int64_t stage, const torch::Tensor& frames);

    torch::nn::Conv3d stem{nullptr};
    std::array<torch::nn::Conv3d, 2> down{nullptr, nullptr};
    std::array<torch::nn::Conv3d, 2> conv{nullptr, nullptr};
    std::array<ResBlock3d, 2> res{nullptr, nullptr};
};
TORCH_MODULE(ModalityEncoder);

/**
 * The full spatio-temporal fusion network.
 *
 * encode -> per-scale fusion -> transformer enhancement -> U-Net style decoding with skips
 * -> BiCAM stack -> fusion head; the same decoded trunk is unmixed into infrared and visible
 * streams for the restoration heads. Every head predicts a residual over the degraded input
 * of matching channel count and is clamped to [0,1].
 */
class VideoFusionNetImpl : public torch::nn::Module {
public:
    explicit VideoFusionNetImpl(const NetworkConfig& config);

    std::pair<FeaturePyramid, FeaturePyramid> encode(const torch::Tensor& ir, const torch::Tensor& vi);
    /// Fusion at level n: CMGF, or the elementwise sum when CMGF is ablated.
    torch::Tensor fuse_level(int64_t level, const torch::Tensor& f_ir, const torch::Tensor& f_vi);
    /// Decoded scale-1 fusion features after the temporal stage.
    torch::Tensor decode(const FeaturePyramid& ir, const FeaturePyramid& vi);
    FusionTensors forward(const torch::Tensor& ir, const torch::Tensor& vi);
    FusionOutput forward(const ClipPair& pair);

    /// Keep attention maps from every attention module during subsequent forwards.
    void set_capture(bool on);
    std::vector<torch::Tensor> captured_attention() const;

    const NetworkConfig& config() const { return config_; }

    ModalityEncoder enc_ir{nullptr}, enc_vi{nullptr};
    std::array<CmDRM, 2> cmdrm_ir{nullptr, nullptr}, cmdrm_vi{nullptr, nullptr};
    std::array<CMGF, 3> cmgf{nullptr, nullptr, nullptr};
    std::array<torch::nn::Sequential, 3> enhance{nullptr, nullptr, nullptr};
    std::array<Upsample, 2> up{nullptr, nullptr};
    std::array<torch::nn::Conv3d, 2> merge{nullptr, nullptr};
    BiCAMStack bicam{nullptr};
    ModalityUnmixing unmix{nullptr};
    torch::nn::Sequential fusion_decoder{nullptr}, ir_decoder{nullptr}, vi_decoder{nullptr};
    torch::nn::Conv2d fusion_head{nullptr}, ir_head{nullptr}, vi_head{nullptr};

private:
    NetworkConfig config_;
};
TORCH_MODULE(VideoFusionNet);

int64_t count_parameters(const torch::nn::Module& module);

} // namespace videofusion
