#include "videofusion/blocks.hpp"

namespace F = torch::nn::functional;

namespace videofusion {

torch::Tensor frames_to_volume(const torch::Tensor& frames) { return frames.permute({1, 0, 2, 3}).unsqueeze(0); }

torch::Tensor volume_to_frames(const torch::Tensor& volume) { return volume.squeeze(0).permute({1, 0, 2, 3}); }

torch::nn::Conv3d make_conv3d(int64_t in, int64_t out, torch::ExpandingArray<3> kernel,
                              torch::ExpandingArray<3> stride) {
    std::vector<int64_t> pad;
    for (auto k : *kernel) pad.push_back(k / 2);
    return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, kernel)
                                 .stride(stride)
                                 .padding(torch::ExpandingArray<3>(pad))
                                 .padding_mode(torch::kReplicate));
}

ChannelNormImpl::ChannelNormImpl(int64_t channels) {
    weight = register_parameter("weight", torch::ones({channels}));
    bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor ChannelNormImpl::forward(const torch::Tensor& x) {
    auto mean = x.mean(1, true);
    auto var = (x - mean).pow(2).mean(1, true);
    auto y = (x - mean) / torch::sqrt(var + 1e-5);
    std::vector<int64_t> shape(static_cast<size_t>(x.dim()), 1);
    shape[1] = x.size(1);
    return y * weight.view(shape) + bias.view(shape);
}

ResBlock3dImpl::ResBlock3dImpl(int64_t channels) {
    conv1 = register_module("conv1", make_conv3d(channels, channels, 3));
    norm = register_module("norm", ChannelNorm(channels));
    conv2 = register_module("conv2", make_conv3d(channels, channels, 3));
}

torch::Tensor ResBlock3dImpl::forward(const torch::Tensor& frames) {
    auto v = frames_to_volume(frames);
    auto y = conv2(torch::gelu(norm(conv1(v))));
    return frames + volume_to_frames(y);
}

TransformerBlockImpl::TransformerBlockImpl(int64_t channels, int64_t heads_, double ffn_factor) : heads(heads_) {
    TORCH_CHECK(channels % heads == 0, "transformer block: heads must divide channels");
    const auto hidden = static_cast<int64_t>(channels * ffn_factor);
    norm1 = register_module("norm1", ChannelNorm(channels));
    temperature = register_parameter("temperature", torch::ones({heads, 1, 1}));
    qkv = register_module("qkv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 3 * channels, 1).bias(false)));
    qkv_dw = register_module(
        "qkv_dw",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(3 * channels, 3 * channels, 3).padding(1).groups(3 * channels).bias(false)));
    attn_out = register_module("attn_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1).bias(false)));
    norm2 = register_module("norm2", ChannelNorm(channels));
    ffn_in = register_module("ffn_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 2 * hidden, 1).bias(false)));
    ffn_dw = register_module(
        "ffn_dw",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * hidden, 2 * hidden, 3).padding(1).groups(2 * hidden).bias(false)));
    ffn_out = register_module("ffn_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, channels, 1).bias(false)));
}

torch::Tensor TransformerBlockImpl::channel_attention(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    auto parts = qkv_dw(qkv(x)).chunk(3, 1);
    auto reshape = [&](const torch::Tensor& t) { return t.reshape({b, heads, c / heads, h * w}); };
    auto q = F::normalize(reshape(parts[0]), F::NormalizeFuncOptions().dim(-1));
    auto k = F::normalize(reshape(parts[1]), F::NormalizeFuncOptions().dim(-1));
    auto v = reshape(parts[2]);
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) * temperature, -1);
    return attn_out(torch::matmul(attn, v).reshape({b, c, h, w}));
}

torch::Tensor TransformerBlockImpl::gated_ffn(const torch::Tensor& x) {
    auto parts = ffn_dw(ffn_in(x)).chunk(2, 1);
    return ffn_out(torch::gelu(parts[0]) * parts[1]);
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
    auto y = x + channel_attention(norm1(x));
    return y + gated_ffn(norm2(y));
}

torch::nn::Sequential make_transformer_stack(int64_t channels, int64_t depth, int64_t heads) {
    torch::nn::Sequential seq;
    for (int64_t i = 0; i < depth; ++i) seq->push_back(TransformerBlock(channels, heads));
    return seq;
}

UpsampleImpl::UpsampleImpl(int64_t channels) {
    conv = register_module("conv",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 2 * channels, 3).padding(1).bias(false)));
}

torch::Tensor UpsampleImpl::forward(const torch::Tensor& x) { return F::pixel_shuffle(conv(x), 2); }

} // namespace videofusion
