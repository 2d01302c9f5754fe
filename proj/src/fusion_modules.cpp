#include "videofusion/fusion_modules.hpp"

#include "videofusion/error.hpp"

namespace videofusion {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* where) {
    if (a.sizes() != b.sizes()) {
        throw DataError(std::string(where) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
    }
}

torch::Tensor broadcast_per_sample(const torch::Tensor& weights) { return weights.view({-1, 1, 1, 1}); }

} // namespace

torch::nn::Conv2d make_projection(int64_t channels) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1));
}

CmDRMImpl::CmDRMImpl(const AttentionOptions& options_) : options(options_) {
    const auto c = options.channels();
    q_proj = register_module("q_proj", make_projection(c));
    k_proj = register_module("k_proj", make_projection(c));
    v_proj = register_module("v_proj", make_projection(c));
    ffn = register_module(
        "ffn", FeedForward(FeedForwardOptions(c).expansion(options.ffn_expansion()).activation(options.ffn_activation())));
    contribution = register_module("contribution", ContributionScores(c));
    ca = register_module("ca", ChannelAttention(c, options.ca_reduction()));
    sa = register_module("sa", SpatialAttention(options.sa_kernel()));
}

CmDRMTrace CmDRMImpl::trace(const torch::Tensor& primary, const torch::Tensor& auxiliary) {
    require_same_shape(primary, auxiliary, "cmdrm");
    auto diff = auxiliary - primary;
    auto q = to_tokens(q_proj(primary), options.window());
    auto k = to_tokens(k_proj(diff), options.window());
    auto v = to_tokens(v_proj(diff), options.window());
    auto attn = scaled_dot_attention(q.tokens, k.tokens, v.tokens, options.heads());

    CmDRMTrace out;
    out.attention = attn.weights;
    out.reinforced = from_tokens(q.tokens + ffn(attn.output), q);
    std::tie(out.w, out.w_tilde) = contribution(primary, out.reinforced);
    auto gated = channel_spatial_gate(broadcast_per_sample(out.w_tilde) * out.reinforced, ca, sa);
    out.output = broadcast_per_sample(out.w) * primary + gated;
    return out;
}

torch::Tensor CmDRMImpl::forward(const torch::Tensor& primary, const torch::Tensor& auxiliary) {
    reset_capture();
    auto t = trace(primary, auxiliary);
    keep(t.attention);
    return t.output;
}

CMGFImpl::CMGFImpl(const AttentionOptions& options_) : options(options_) {
    const auto c = options.channels();
    auto ffn_opts = FeedForwardOptions(c).expansion(options.ffn_expansion()).activation(options.ffn_activation());
    q_proj = register_module("q_proj", make_projection(c));
    k_ir = register_module("k_ir", make_projection(c));
    v_ir = register_module("v_ir", make_projection(c));
    k_vi = register_module("k_vi", make_projection(c));
    v_vi = register_module("v_vi", make_projection(c));
    ffn_ir = register_module("ffn_ir", FeedForward(ffn_opts));
    ffn_vi = register_module("ffn_vi", FeedForward(ffn_opts));
}

CMGFTrace CMGFImpl::trace(const torch::Tensor& f_ir, const torch::Tensor& f_vi) {
    require_same_shape(f_ir, f_vi, "cmgf");
    auto q = to_tokens(q_proj(f_ir + f_vi), options.window());
    auto ir = scaled_dot_attention(q.tokens, to_tokens(k_ir(f_ir), options.window()).tokens,
                                   to_tokens(v_ir(f_ir), options.window()).tokens, options.heads());
    auto vi = scaled_dot_attention(q.tokens, to_tokens(k_vi(f_vi), options.window()).tokens,
                                   to_tokens(v_vi(f_vi), options.window()).tokens, options.heads());
    CMGFTrace out;
    out.query = from_tokens(q.tokens, q);
    out.output = from_tokens(q.tokens + ffn_ir(ir.output) + ffn_vi(vi.output), q);
    out.attention_ir = ir.weights;
    out.attention_vi = vi.weights;
    return out;
}

torch::Tensor CMGFImpl::forward(const torch::Tensor& f_ir, const torch::Tensor& f_vi) {
    reset_capture();
    auto t = trace(f_ir, f_vi);
    keep(t.attention_ir);
    keep(t.attention_vi);
    return t.output;
}

BiCAMImpl::BiCAMImpl(const AttentionOptions& options_, CoAttentionMode mode_) : options(options_), mode(mode_) {
    const auto c = options.channels();
    auto ffn_opts = FeedForwardOptions(c).expansion(options.ffn_expansion()).activation(options.ffn_activation());
    q_proj = register_module("q_proj", make_projection(c));
    k_proj = register_module("k_proj", make_projection(c));
    v_proj = register_module("v_proj", make_projection(c));
    ffn_prev = register_module("ffn_prev", FeedForward(ffn_opts));
    ffn_next = register_module("ffn_next", FeedForward(ffn_opts));
}

BiCAMTrace BiCAMImpl::trace(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next) {
    require_same_shape(prev, cur, "bicam");
    require_same_shape(next, cur, "bicam");
    const auto heads = options.heads();
    auto q = to_tokens(q_proj(cur), options.window());
    auto v_prev = to_tokens(v_proj(prev), options.window()).tokens;
    auto v_next = to_tokens(v_proj(next), options.window()).tokens;

    BiCAMTrace out;
    out.attention_prev = attention_weights(q.tokens, to_tokens(k_proj(prev), options.window()).tokens, heads);
    out.attention_next = attention_weights(q.tokens, to_tokens(k_proj(next), options.window()).tokens, heads);
    auto joint = mode == CoAttentionMode::elementwise ? out.attention_prev * out.attention_next
                                                      : torch::matmul(out.attention_prev, out.attention_next);
    out.attention_co = torch::softmax(joint, -1);
    out.aggregate_prev = apply_attention(out.attention_co, v_prev, heads);
    out.aggregate_next = apply_attention(out.attention_co, v_next, heads);
    out.query = from_tokens(q.tokens, q);
    out.output = from_tokens(q.tokens + ffn_prev(out.aggregate_prev) + ffn_next(out.aggregate_next), q);
    return out;
}

torch::Tensor BiCAMImpl::forward(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next) {
    reset_capture();
    auto t = trace(prev, cur, next);
    keep(t.attention_prev);
    keep(t.attention_next);
    keep(t.attention_co);
    return t.output;
}

std::pair<torch::Tensor, torch::Tensor> temporal_neighbours(const torch::Tensor& frames) {
    if (frames.size(0) < 1) throw DataError("bicam: empty frame sequence");
    const auto t = frames.size(0);
    auto prev = torch::cat({frames.narrow(0, 0, 1), frames.narrow(0, 0, t - 1)}, 0);
    auto next = torch::cat({frames.narrow(0, 1, t - 1), frames.narrow(0, t - 1, 1)}, 0);
    return {prev, next};
}

BiCAMStackImpl::BiCAMStackImpl(const AttentionOptions& options, int64_t count, CoAttentionMode mode) {
    TORCH_CHECK(count >= 1, "bicam stack needs at least one layer");
    for (int64_t i = 0; i < count; ++i) {
        layers.push_back(register_module("layer" + std::to_string(i), BiCAM(options, mode)));
    }
}

torch::Tensor BiCAMStackImpl::forward(const torch::Tensor& frames) {
    if (frames.dim() != 4 || frames.size(0) < 1) throw DataError("bicam stack: empty sequence");
    auto x = frames;
    for (auto& layer : layers) {
        auto [prev, next] = temporal_neighbours(x);
        x = layer(prev, x, next);
    }
    return x;
}

void BiCAMStackImpl::set_capture(bool on) {
    for (auto& layer : layers) layer->set_capture(on);
}

std::vector<torch::Tensor> BiCAMStackImpl::captured() const {
    std::vector<torch::Tensor> all;
    for (const auto& layer : layers) all.insert(all.end(), layer->captured().begin(), layer->captured().end());
    return all;
}

ModalityUnmixingImpl::ModalityUnmixingImpl(int64_t channels, int64_t ca_reduction, int64_t sa_kernel) {
    ca_ir = register_module("ca_ir", ChannelAttention(channels, ca_reduction));
    sa_ir = register_module("sa_ir", SpatialAttention(sa_kernel));
    ca_vi = register_module("ca_vi", ChannelAttention(channels, ca_reduction));
    sa_vi = register_module("sa_vi", SpatialAttention(sa_kernel));
}

std::pair<torch::Tensor, torch::Tensor> ModalityUnmixingImpl::forward(const torch::Tensor& fused) {
    return {channel_spatial_gate(fused, ca_ir, sa_ir), channel_spatial_gate(fused, ca_vi, sa_vi)};
}

} // namespace videofusion
