#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "videofusion/attention.hpp"

namespace videofusion {

struct AttentionOptions {
    AttentionOptions(int64_t channels) : channels_(channels) {}
    TORCH_ARG(int64_t, channels);
    TORCH_ARG(int64_t, heads) = 4;
    /// Token window side; 0 attends over the whole frame.
    TORCH_ARG(int64_t, window) = 8;
    TORCH_ARG(double, ffn_expansion) = 2.0;
    TORCH_ARG(Activation, ffn_activation) = Activation::gelu;
    TORCH_ARG(int64_t, ca_reduction) = 8;
    TORCH_ARG(int64_t, sa_kernel) = 7;
};

/// 1x1 convolution with bias, used for every q/k/v projection.
torch::nn::Conv2d make_projection(int64_t channels);

/// Mixin for modules that can retain their attention maps from the last forward pass.
class AttentionCapture {
public:
    void set_capture(bool on) {
        capture_ = on;
        captured_.clear();
    }
    const std::vector<torch::Tensor>& captured() const { return captured_; }

protected:
    void keep(const torch::Tensor& weights) {
        if (capture_) captured_.push_back(weights.detach());
    }
    void reset_capture() { captured_.clear(); }

private:
    bool capture_ = false;
    std::vector<torch::Tensor> captured_;
};

// ---------------------------------------------------------------------------------------
// Cross-modal differential reinforcement

struct CmDRMTrace {
    torch::Tensor output;     // w * primary + SA(CA(w~ * reinforced))
    torch::Tensor reinforced; // q + FFN(attention)
    torch::Tensor w;          // B
    torch::Tensor w_tilde;    // B
    torch::Tensor attention;  // (B * windows) x heads x L x L
};

/**
 * Injects what the auxiliary modality has and the primary lacks. Queries come from the
 * primary map, keys and values from the difference (auxiliary - primary); the attended
 * result passes an FFN with a residual on the queries, then a learned contribution split
 * weighs it against the primary map before channel and spatial gating.
 *
 * Operates frame-wise on B x C x H x W maps (frames as batch).
 */
class CmDRMImpl : public torch::nn::Module, public AttentionCapture {
public:
    explicit CmDRMImpl(const AttentionOptions& options);
    torch::Tensor forward(const torch::Tensor& primary, const torch::Tensor& auxiliary);
    CmDRMTrace trace(const torch::Tensor& primary, const torch::Tensor& auxiliary);

    AttentionOptions options;
    torch::nn::Conv2d q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr};
    FeedForward ffn{nullptr};
    ContributionScores contribution{nullptr};
    ChannelAttention ca{nullptr};
    SpatialAttention sa{nullptr};
};
TORCH_MODULE(CmDRM);

// ---------------------------------------------------------------------------------------
// Complete modality-guided fusion

struct CMGFTrace {
    torch::Tensor output;
    torch::Tensor query;        // projected F_ir + F_vi, as a B x C x H x W map
    torch::Tensor attention_ir; // (B * windows) x heads x L x L
    torch::Tensor attention_vi;
};

/// The summed modalities act as a shared query over per-modality keys/values; each branch
/// has its own FFN, and both are added to the query.
class CMGFImpl : public torch::nn::Module, public AttentionCapture {
public:
    explicit CMGFImpl(const AttentionOptions& options);
    torch::Tensor forward(const torch::Tensor& f_ir, const torch::Tensor& f_vi);
    CMGFTrace trace(const torch::Tensor& f_ir, const torch::Tensor& f_vi);

    AttentionOptions options;
    torch::nn::Conv2d q_proj{nullptr}, k_ir{nullptr}, v_ir{nullptr}, k_vi{nullptr}, v_vi{nullptr};
    FeedForward ffn_ir{nullptr}, ffn_vi{nullptr};
};
TORCH_MODULE(CMGF);

// ---------------------------------------------------------------------------------------
// Bi-temporal co-attention

/// How the backward and forward attention maps are combined before re-normalization.
enum class CoAttentionMode { elementwise, matmul };

struct BiCAMTrace {
    torch::Tensor output;
    torch::Tensor query;
    torch::Tensor attention_prev; // (B * windows) x heads x L x L
    torch::Tensor attention_next;
    torch::Tensor attention_co;
    torch::Tensor aggregate_prev; // A_co v_prev, tokens
    torch::Tensor aggregate_next; // A_co v_next, tokens
};

/// One BiCAM step for a batch of frames given their previous and next neighbours.
class BiCAMImpl : public torch::nn::Module, public AttentionCapture {
public:
    BiCAMImpl(const AttentionOptions& options, CoAttentionMode mode = CoAttentionMode::elementwise);
    torch::Tensor forward(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next);
    BiCAMTrace trace(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next);

    AttentionOptions options;
    CoAttentionMode mode;
    torch::nn::Conv2d q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr};
    FeedForward ffn_prev{nullptr}, ffn_next{nullptr};
};
TORCH_MODULE(BiCAM);

/// Replicate-at-boundary neighbours of a T x C x H x W sequence: (prev, next).
std::pair<torch::Tensor, torch::Tensor> temporal_neighbours(const torch::Tensor& frames);

/// N BiCAM layers applied in sequence; each output frame sees at most N frames either side.
class BiCAMStackImpl : public torch::nn::Module {
public:
    BiCAMStackImpl(const AttentionOptions& options, int64_t layers,
                   CoAttentionMode mode = CoAttentionMode::elementwise);
    torch::Tensor forward(const torch::Tensor& frames);
    void set_capture(bool on);
    std::vector<torch::Tensor> captured() const;

    std::vector<BiCAM> layers;
};
TORCH_MODULE(BiCAMStack);

// ---------------------------------------------------------------------------------------
// Modality unmixing

/// Two CBAM-gated branches splitting fused features into infrared and visible streams.
class ModalityUnmixingImpl : public torch::nn::Module {
public:
    ModalityUnmixingImpl(int64_t channels, int64_t ca_reduction = 8, int64_t sa_kernel = 7);
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& fused);

    ChannelAttention ca_ir{nullptr}, ca_vi{nullptr};
    SpatialAttention sa_ir{nullptr}, sa_vi{nullptr};
};
TORCH_MODULE(ModalityUnmixing);

} // namespace videofusion
