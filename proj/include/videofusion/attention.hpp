#pragma once

#include <cstdint>
#include <utility>

#include <torch/torch.h>

namespace videofusion {

/**
 * Spatial positions of a batch of frames flattened into attention tokens.
 *
 * `tokens` is (B * windows) x L x D where each row block holds the L = wh * ww positions of
 * one non-overlapping window. A window side of 0 (or one covering the frame) makes every
 * frame a single token set with L = H * W.
 */
struct TokenGrid {
    torch::Tensor tokens;
    int64_t batch = 0;
    int64_t height = 0;
    int64_t width = 0;
    int64_t window_h = 0;
    int64_t window_w = 0;

    int64_t windows_per_frame() const { return (height / window_h) * (width / window_w); }
};

/// Effective window sides for an H x W map: min(window, side), 0 meaning the whole frame.
std::pair<int64_t, int64_t> effective_window(int64_t height, int64_t width, int64_t window);

/// B x C x H x W -> TokenGrid. Throws if the window does not tile the frame.
TokenGrid to_tokens(const torch::Tensor& features, int64_t window);
/// Inverse of to_tokens for any tensor laid out like grid.tokens (channel count may differ).
torch::Tensor from_tokens(const torch::Tensor& tokens, const TokenGrid& grid);

/// B x L x D -> B x heads x L x D/heads.
torch::Tensor split_heads(const torch::Tensor& x, int64_t heads);
/// B x heads x L x d -> B x L x heads*d.
torch::Tensor merge_heads(const torch::Tensor& x);

/// softmax(q k^T / sqrt(d_k)) per head; returns B x heads x Lq x Lk.
torch::Tensor attention_weights(const torch::Tensor& q, const torch::Tensor& k, int64_t heads);
/// weights (B x heads x Lq x Lk) applied to v (B x Lk x D), heads merged back: B x Lq x D.
torch::Tensor apply_attention(const torch::Tensor& weights, const torch::Tensor& v, int64_t heads);

struct AttentionResult {
    torch::Tensor output;  // B x Lq x D
    torch::Tensor weights; // B x heads x Lq x Lk
};

/// Plain multi-head scaled dot-product attention over pre-projected q, k, v. No residual, no FFN.
AttentionResult scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                     int64_t heads);

enum class Activation { gelu, relu };

torch::Tensor activate(const torch::Tensor& x, Activation act);

struct FeedForwardOptions {
    FeedForwardOptions(int64_t dim) : dim_(dim) {}
    TORCH_ARG(int64_t, dim);
    TORCH_ARG(double, expansion) = 2.0;
    TORCH_ARG(Activation, activation) = Activation::gelu;
};

/// Token-wise two-layer MLP over the last dimension: fc2(act(fc1(x))).
class FeedForwardImpl : public torch::nn::Module {
public:
    explicit FeedForwardImpl(const FeedForwardOptions& options);
    torch::Tensor forward(const torch::Tensor& x);

    FeedForwardOptions options;
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeedForward);

/**
 * CBAM channel gate: global average and max pooled descriptors pass through one shared
 * bottleneck MLP, are summed, and squashed by a sigmoid. Returns B x C weights in (0,1).
 */
class ChannelAttentionImpl : public torch::nn::Module {
public:
    ChannelAttentionImpl(int64_t channels, int64_t reduction = 8);
    torch::Tensor forward(const torch::Tensor& features);

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// CBAM spatial gate: conv over [channel mean, channel max] then sigmoid. Returns B x 1 x H x W.
class SpatialAttentionImpl : public torch::nn::Module {
public:
    explicit SpatialAttentionImpl(int64_t kernel_size = 7);
    torch::Tensor forward(const torch::Tensor& features);

    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// features * CA(features), then * SA(result).
torch::Tensor channel_spatial_gate(const torch::Tensor& features, ChannelAttention& ca, SpatialAttention& sa);

/**
 * Learnable contribution measurement: concat(primary, reinforced) -> 3x3 conv -> GELU ->
 * global average pool -> linear to two logits -> softmax. Returns (w, w_tilde), each of
 * shape B, with w + w_tilde = 1.
 */
class ContributionScoresImpl : public torch::nn::Module {
public:
    explicit ContributionScoresImpl(int64_t channels);
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& primary, const torch::Tensor& reinforced);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(ContributionScores);

} // namespace videofusion
