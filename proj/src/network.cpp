#include "videofusion/network.hpp"

#include "videofusion/error.hpp"

namespace videofusion {

void NetworkConfig::validate() const {
    if (!(channels[0] < channels[1] && channels[1] < channels[2]) || channels[0] < 1) {
        throw ConfigError("channels must be positive and strictly increasing");
    }
    for (auto d : depths) {
        if (d < 1) throw ConfigError("enhancement depths must be >= 1");
    }
    if (bicam_count < 1) throw ConfigError("bicam_count must be >= 1");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    for (auto c : channels) {
        if (c % heads != 0) throw ConfigError("heads must divide every channel width");
    }
    if (train_window < 1) throw ConfigError("train_window must be >= 1");
    if (window_partition < 0) throw ConfigError("window_partition must be >= 0");
    if (!(ffn_expansion > 0.0)) throw ConfigError("ffn_expansion must be positive");
    if (decoder_depth < 0) throw ConfigError("decoder_depth must be >= 0");
    if (sa_kernel < 1 || sa_kernel % 2 == 0) throw ConfigError("sa_kernel must be odd");
    if (ca_reduction < 1) throw ConfigError("ca_reduction must be >= 1");
}

ModalityEncoderImpl::ModalityEncoderImpl(int64_t in_channels, const std::array<int64_t, 3>& channels) {
    stem = register_module("stem", make_conv3d(in_channels, channels[0], 3));
    for (size_t s = 0; s < 2; ++s) {
        const auto suffix = std::to_string(s + 2);
        down[s] = register_module("down" + suffix, make_conv3d(channels[s], channels[s + 1], {1, 3, 3}, {1, 2, 2}));
        conv[s] = register_module("conv" + suffix, make_conv3d(channels[s + 1], channels[s + 1], 3));
        res[s] = register_module("res" + suffix, ResBlock3d(channels[s + 1]));
    }
}

torch::Tensor ModalityEncoderImpl::stem_forward(const torch::Tensor& frames) {
    return volume_to_frames(stem(frames_to_volume(frames)));
}

torch::Tensor ModalityEncoderImpl::stage_forward(int64_t stage, const torch::Tensor& frames) {
    auto& d = down[static_cast<size_t>(stage)];
    auto& c = conv[static_cast<size_t>(stage)];
    auto x = torch::gelu(c(d(frames_to_volume(frames))));
    return res[static_cast<size_t>(stage)](volume_to_frames(x));
}

VideoFusionNetImpl::VideoFusionNetImpl(const NetworkConfig& config) : config_(config) {
    config_.validate();
    const auto& ch = config_.channels;
    auto attn = [&](int64_t c) {
        return AttentionOptions(c)
            .heads(config_.heads)
            .window(config_.window_partition)
            .ffn_expansion(config_.ffn_expansion)
            .ca_reduction(config_.ca_reduction)
            .sa_kernel(config_.sa_kernel);
    };

    enc_ir = register_module("enc_ir", ModalityEncoder(1, ch));
    enc_vi = register_module("enc_vi", ModalityEncoder(3, ch));
    if (config_.use_cmdrm) {
        for (size_t s = 0; s < 2; ++s) {
            const auto suffix = std::to_string(s + 2);
            cmdrm_ir[s] = register_module("cmdrm_ir" + suffix, CmDRM(attn(ch[s + 1])));
            cmdrm_vi[s] = register_module("cmdrm_vi" + suffix, CmDRM(attn(ch[s + 1])));
        }
    }
    for (size_t n = 0; n < 3; ++n) {
        const auto suffix = std::to_string(n + 1);
        if (config_.use_cmgf) cmgf[n] = register_module("cmgf" + suffix, CMGF(attn(ch[n])));
        enhance[n] = register_module("enhance" + suffix, make_transformer_stack(ch[n], config_.depths[n], config_.heads));
    }
    for (size_t n = 0; n < 2; ++n) {
        const auto suffix = std::to_string(n + 1);
        up[n] = register_module("up" + suffix, Upsample(ch[n + 1]));
        merge[n] = register_module("merge" + suffix, make_conv3d(2 * ch[n], ch[n], 3));
    }
    if (config_.use_bicam) {
        bicam = register_module("bicam", BiCAMStack(attn(ch[0]), config_.bicam_count, config_.co_attention));
    }
    unmix = register_module("unmix", ModalityUnmixing(ch[0], config_.ca_reduction, config_.sa_kernel));
    fusion_decoder = register_module("fusion_decoder", make_transformer_stack(ch[0], config_.decoder_depth, config_.heads));
    ir_decoder = register_module("ir_decoder", make_transformer_stack(ch[0], config_.decoder_depth, config_.heads));
    vi_decoder = register_module("vi_decoder", make_transformer_stack(ch[0], config_.decoder_depth, config_.heads));
    auto head = [&](int64_t out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[0], out, 3).padding(1)); };
    fusion_head = register_module("fusion_head", head(3));
    ir_head = register_module("ir_head", head(1));
    vi_head = register_module("vi_head", head(3));
}

std::pair<FeaturePyramid, FeaturePyramid> VideoFusionNetImpl::encode(const torch::Tensor& ir, const torch::Tensor& vi) {
    if (ir.dim() != 4 || vi.dim() != 4 || ir.size(1) != 1 || vi.size(1) != 3) {
        throw DataError("encode expects T x 1 x H x W infrared and T x 3 x H x W visible frames");
    }
    if (ir.size(0) != vi.size(0) || ir.size(2) != vi.size(2) || ir.size(3) != vi.size(3)) {
        throw DataError("infrared and visible inputs disagree in T, H or W");
    }
    if (ir.size(2) % 4 != 0 || ir.size(3) % 4 != 0) {
        throw DataError("frame height and width must be divisible by 4, got " + std::to_string(ir.size(2)) + "x" +
                        std::to_string(ir.size(3)));
    }
    FeaturePyramid p_ir{{}, Modality::infrared};
    FeaturePyramid p_vi{{}, Modality::visible};
    p_ir.levels[0] = enc_ir->stem_forward(ir);
    p_vi.levels[0] = enc_vi->stem_forward(vi);
    for (int64_t s = 0; s < 2; ++s) {
        auto x_ir = enc_ir->stage_forward(s, p_ir.levels[static_cast<size_t>(s)]);
        auto x_vi = enc_vi->stage_forward(s, p_vi.levels[static_cast<size_t>(s)]);
        if (config_.use_cmdrm) {
            auto r_ir = cmdrm_ir[static_cast<size_t>(s)](x_ir, x_vi);
            auto r_vi = cmdrm_vi[static_cast<size_t>(s)](x_vi, x_ir);
            x_ir = r_ir;
            x_vi = r_vi;
        }
        p_ir.levels[static_cast<size_t>(s + 1)] = x_ir;
        p_vi.levels[static_cast<size_t>(s + 1)] = x_vi;
    }
    return {p_ir, p_vi};
}

torch::Tensor VideoFusionNetImpl::fuse_level(int64_t level, const torch::Tensor& f_ir, const torch::Tensor& f_vi) {
    if (!config_.use_cmgf) return f_ir + f_vi;
    return cmgf[static_cast<size_t>(level)](f_ir, f_vi);
}

torch::Tensor VideoFusionNetImpl::decode(const FeaturePyramid& ir, const FeaturePyramid& vi) {
    std::array<torch::Tensor, 3> fused;
    for (size_t n = 0; n < 3; ++n) {
        fused[n] = enhance[n]->forward(fuse_level(static_cast<int64_t>(n), ir.levels[n], vi.levels[n]));
    }
    auto x = fused[2];
    for (int n = 1; n >= 0; --n) {
        auto skip = torch::cat({up[static_cast<size_t>(n)](x), fused[static_cast<size_t>(n)]}, 1);
        x = volume_to_frames(merge[static_cast<size_t>(n)](frames_to_volume(skip)));
    }
    if (config_.use_bicam) x = bicam(x);
    return x;
}

FusionTensors VideoFusionNetImpl::forward(const torch::Tensor& ir, const torch::Tensor& vi) {
    auto [p_ir, p_vi] = encode(ir, vi);
    auto trunk = decode(p_ir, p_vi);
    auto [u_ir, u_vi] = unmix(trunk);
    FusionTensors out;
    out.fused = (vi + fusion_head(fusion_decoder->forward(trunk))).clamp(0.0, 1.0);
    out.restored_ir = (ir + ir_head(ir_decoder->forward(u_ir))).clamp(0.0, 1.0);
    out.restored_vi = (vi + vi_head(vi_decoder->forward(u_vi))).clamp(0.0, 1.0);
    return out;
}

FusionOutput VideoFusionNetImpl::forward(const ClipPair& pair) {
    auto t = forward(pair.ir.data, pair.vi.data);
    const double fps = pair.vi.frame_rate;
    return FusionOutput{Clip{t.fused, fps, Modality::fused}, Clip{t.restored_ir, fps, Modality::infrared},
                        Clip{t.restored_vi, fps, Modality::visible}};
}

void VideoFusionNetImpl::set_capture(bool on) {
    for (auto& m : cmdrm_ir) if (m) m->set_capture(on);
    for (auto& m : cmdrm_vi) if (m) m->set_capture(on);
    for (auto& m : cmgf) if (m) m->set_capture(on);
    if (bicam) bicam->set_capture(on);
}

std::vector<torch::Tensor> VideoFusionNetImpl::captured_attention() const {
    std::vector<torch::Tensor> all;
    auto add = [&](const std::vector<torch::Tensor>& v) { all.insert(all.end(), v.begin(), v.end()); };
    for (const auto& m : cmdrm_ir) if (m) add(m->captured());
    for (const auto& m : cmdrm_vi) if (m) add(m->captured());
    for (const auto& m : cmgf) if (m) add(m->captured());
    if (bicam) add(bicam->captured());
    return all;
}

int64_t count_parameters(const torch::nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters()) {
        if (p.requires_grad()) n += p.numel();
    }
    return n;
}

} // namespace videofusion
