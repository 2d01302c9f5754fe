#include "videofusion/attention.hpp"

#include <algorithm>
#include <cmath>

#include "videofusion/error.hpp"

namespace F = torch::nn::functional;

namespace videofusion {

std::pair<int64_t, int64_t> effective_window(int64_t height, int64_t width, int64_t window) {
    if (window <= 0) return {height, width};
    return {std::min(window, height), std::min(window, width)};
}

TokenGrid to_tokens(const torch::Tensor& features, int64_t window) {
    TORCH_CHECK(features.dim() == 4, "to_tokens expects B x C x H x W, got ", features.sizes());
    const auto b = features.size(0), c = features.size(1), h = features.size(2), w = features.size(3);
    auto [wh, ww] = effective_window(h, w, window);
    if (h % wh != 0 || w % ww != 0) {
        throw ConfigError("attention window " + std::to_string(window) + " does not tile a " + std::to_string(h) +
                          "x" + std::to_string(w) + " map");
    }
    // B, C, H/wh, wh, W/ww, ww -> B, H/wh, W/ww, wh, ww, C
    auto x = features.reshape({b, c, h / wh, wh, w / ww, ww}).permute({0, 2, 4, 3, 5, 1});
    TokenGrid grid;
    grid.tokens = x.reshape({b * (h / wh) * (w / ww), wh * ww, c});
    grid.batch = b;
    grid.height = h;
    grid.width = w;
    grid.window_h = wh;
    grid.window_w = ww;
    return grid;
}

torch::Tensor from_tokens(const torch::Tensor& tokens, const TokenGrid& grid) {
    const auto c = tokens.size(-1);
    const auto nh = grid.height / grid.window_h, nw = grid.width / grid.window_w;
    auto x = tokens.reshape({grid.batch, nh, nw, grid.window_h, grid.window_w, c}).permute({0, 5, 1, 3, 2, 4});
    return x.reshape({grid.batch, c, grid.height, grid.width});
}

torch::Tensor split_heads(const torch::Tensor& x, int64_t heads) {
    const auto d = x.size(-1);
    if (heads < 1 || d % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " does not divide dimension " + std::to_string(d));
    }
    return x.reshape({x.size(0), x.size(1), heads, d / heads}).transpose(1, 2);
}

torch::Tensor merge_heads(const torch::Tensor& x) {
    auto y = x.transpose(1, 2);
    return y.reshape({y.size(0), y.size(1), y.size(2) * y.size(3)});
}

torch::Tensor attention_weights(const torch::Tensor& q, const torch::Tensor& k, int64_t heads) {
    TORCH_CHECK(q.dim() == 3 && k.dim() == 3, "attention expects B x L x D tokens");
    if (q.size(-1) != k.size(-1)) throw DataError("query/key dimension mismatch");
    if (q.size(0) != k.size(0)) throw DataError("query/key batch mismatch");
    auto qh = split_heads(q, heads);
    auto kh = split_heads(k, heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(qh.size(-1)));
    return torch::softmax(torch::matmul(qh, kh.transpose(-2, -1)) * scale, -1);
}

torch::Tensor apply_attention(const torch::Tensor& weights, const torch::Tensor& v, int64_t heads) {
    if (weights.size(-1) != v.size(1)) throw DataError("attention weights and values disagree on key count");
    return merge_heads(torch::matmul(weights, split_heads(v, heads)));
}

AttentionResult scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                     int64_t heads) {
    if (k.sizes() != v.sizes()) throw DataError("key/value shape mismatch");
    auto weights = attention_weights(q, k, heads);
    return {apply_attention(weights, v, heads), weights};
}

torch::Tensor activate(const torch::Tensor& x, Activation act) {
    return act == Activation::relu ? torch::relu(x) : torch::gelu(x);
}

FeedForwardImpl::FeedForwardImpl(const FeedForwardOptions& options_) : options(options_) {
    const auto hidden = static_cast<int64_t>(std::llround(options.dim() * options.expansion()));
    TORCH_CHECK(hidden >= 1, "feed-forward hidden width must be positive");
    fc1 = register_module("fc1", torch::nn::Linear(options.dim(), hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, options.dim()));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
    if (x.size(-1) != options.dim()) {
        throw DataError("feed-forward expects last dimension " + std::to_string(options.dim()) + ", got " +
                        std::to_string(x.size(-1)));
    }
    return fc2(activate(fc1(x), options.activation()));
}

ChannelAttentionImpl::ChannelAttentionImpl(int64_t channels, int64_t reduction) {
    const auto hidden = std::max<int64_t>(1, channels / std::max<int64_t>(1, reduction));
    fc1 = register_module("fc1", torch::nn::Linear(torch::nn::LinearOptions(channels, hidden).bias(false)));
    fc2 = register_module("fc2", torch::nn::Linear(torch::nn::LinearOptions(hidden, channels).bias(false)));
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& features) {
    auto avg = features.mean({2, 3});
    auto max = features.amax({2, 3});
    auto mlp = [&](const torch::Tensor& d) { return fc2(torch::relu(fc1(d))); };
    return torch::sigmoid(mlp(avg) + mlp(max));
}

SpatialAttentionImpl::SpatialAttentionImpl(int64_t kernel_size) {
    TORCH_CHECK(kernel_size % 2 == 1, "spatial attention kernel must be odd");
    conv = register_module(
        "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, kernel_size).padding(kernel_size / 2).bias(false)));
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& features) {
    auto avg = features.mean(1, /*keepdim=*/true);
    auto max = features.amax(1, /*keepdim=*/true);
    return torch::sigmoid(conv(torch::cat({avg, max}, 1)));
}

torch::Tensor channel_spatial_gate(const torch::Tensor& features, ChannelAttention& ca, SpatialAttention& sa) {
    auto refined = features * ca(features).unsqueeze(-1).unsqueeze(-1);
    return refined * sa(refined);
}

ContributionScoresImpl::ContributionScoresImpl(int64_t channels) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * channels, channels, 3).padding(1)));
    proj = register_module("proj", torch::nn::Linear(channels, 2));
}

std::pair<torch::Tensor, torch::Tensor> ContributionScoresImpl::forward(const torch::Tensor& primary,
                                                                        const torch::Tensor& reinforced) {
    if (primary.sizes() != reinforced.sizes()) throw DataError("contribution scores: shape mismatch");
    auto pooled = torch::gelu(conv(torch::cat({primary, reinforced}, 1))).mean({2, 3});
    auto scores = torch::softmax(proj(pooled), -1);
    return {scores.select(-1, 0), scores.select(-1, 1)};
}

} // namespace videofusion
