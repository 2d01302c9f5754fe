#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace videofusion {

// Frame-major clips (T x C x H x W) are treated as a batch of T frames by 2-D ops and
// reshaped to 1 x C x T x H x W for 3-D convolutions.
torch::Tensor frames_to_volume(const torch::Tensor& frames);
torch::Tensor volume_to_frames(const torch::Tensor& volume);

/// 3-D convolution with replicate padding on every axis, so a temporally static clip
/// stays static at the first and last frames.
torch::nn::Conv3d make_conv3d(int64_t in, int64_t out, torch::ExpandingArray<3> kernel,
                              torch::ExpandingArray<3> stride = 1);

/// Per-pixel LayerNorm over the channels of a B x C x ... map, with affine weight and bias.
class ChannelNormImpl : public torch::nn::Module {
public:
    explicit ChannelNormImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight, bias;
};
TORCH_MODULE(ChannelNorm);

/// conv3d -> channel norm -> GELU -> conv3d, plus identity skip. Operates on T x C x H x W.
class ResBlock3dImpl : public torch::nn::Module {
public:
    explicit ResBlock3dImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& frames);

    torch::nn::Conv3d conv1{nullptr}, conv2{nullptr};
    ChannelNorm norm{nullptr};
};
TORCH_MODULE(ResBlock3d);

/**
 * Restormer transformer block: multi-Dconv head transposed attention (attention across
 * channels with per-head learned temperature) followed by the gated-Dconv feed-forward
 * network, each behind a channel LayerNorm and a residual connection.
 */
class TransformerBlockImpl : public torch::nn::Module {
public:
    TransformerBlockImpl(int64_t channels, int64_t heads, double ffn_factor = 2.66);
    torch::Tensor forward(const torch::Tensor& x);

    int64_t heads;
    ChannelNorm norm1{nullptr}, norm2{nullptr};
    torch::Tensor temperature;
    torch::nn::Conv2d qkv{nullptr}, qkv_dw{nullptr}, attn_out{nullptr};
    torch::nn::Conv2d ffn_in{nullptr}, ffn_dw{nullptr}, ffn_out{nullptr};

private:
    torch::Tensor channel_attention(const torch::Tensor& x);
    torch::Tensor gated_ffn(const torch::Tensor& x);
};
TORCH_MODULE(TransformerBlock);

/// A sequence of TransformerBlocks applied to B x C x H x W maps.
torch::nn::Sequential make_transformer_stack(int64_t channels, int64_t depth, int64_t heads);

/// 3x3 conv to 2C channels followed by pixel shuffle: C x H x W -> C/2 x 2H x 2W.
class UpsampleImpl : public torch::nn::Module {
public:
    explicit UpsampleImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Upsample);

} // namespace videofusion
