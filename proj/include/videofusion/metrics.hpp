#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "videofusion/video.hpp"

namespace videofusion::metrics {

// All metrics operate on 8-bit grayscale frames held as CV_64F matrices on the 0..255 scale.
// Fused and visible clips are reduced to BT.601 luma before quantization.

/// T x H x W grayscale 8-bit frames of a clip (luma for 3-channel clips).
std::vector<cv::Mat> gray_frames(const Clip& clip);
cv::Mat gray_frame(const torch::Tensor& chw);

/// Shannon entropy (bits) of the 256-bin histogram.
double entropy(const cv::Mat& frame);

/// Mutual information (bits) of two frames from their 256 x 256 joint histogram.
double mutual_information(const cv::Mat& a, const cv::Mat& b);

/// MI(fused, ir) + MI(fused, vi).
double mutual_information(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi);

/// Population standard deviation.
double std_dev(const cv::Mat& frame);

/// Mean SSIM over the valid region of an 11x11, sigma 1.5 Gaussian window;
/// C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
double ssim(const cv::Mat& a, const cv::Mat& b);

/// (SSIM(fused, ir) + SSIM(fused, vi)) / 2.
double ssim_fusion(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi);

/// Four-scale pixel-domain visual information fidelity of `distorted` w.r.t. `reference`.
/// Frames too small for the coarser scales use only the scales that fit (17x17 minimum).
/// Returns nullopt when the reference carries no information (zero variance everywhere).
std::optional<double> vif_pixel(const cv::Mat& reference, const cv::Mat& distorted);

enum class VifNormalization { sum, mean };

/// VIF of the fused frame against each source, combined by `norm`; sources whose term is
/// undefined are skipped.
double vif_fusion(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi,
                  VifNormalization norm = VifNormalization::sum);

/// Fixed Farneback (polynomial expansion) parameters used by flowD.
struct FlowParams {
    double pyr_scale = 0.5;
    int levels = 3;
    int winsize = 15;
    int iterations = 3;
    int poly_n = 5;
    double poly_sigma = 1.2;
};

/// Dense flow between two 8-bit-scale frames, CV_32FC2.
cv::Mat dense_flow(const cv::Mat& from, const cv::Mat& to, const FlowParams& params = {});

/// Mean endpoint error between two flow fields.
double mean_epe(const cv::Mat& a, const cv::Mat& b);

/// Mean over transitions of the average (over ir and vi) endpoint error between the fused
/// clip's flow and each source clip's flow. Lower means temporally more consistent.
double flow_consistency(const std::vector<cv::Mat>& fused, const std::vector<cv::Mat>& ir,
                        const std::vector<cv::Mat>& vi, const FlowParams& params = {});
double flow_consistency(const Clip& fused, const Clip& ir, const Clip& vi, const FlowParams& params = {});

struct ColumnProfile {
    int64_t column = 0;
    torch::Tensor strip;            // T x H, values in [0,1]
    std::vector<double> variation;  // T - 1 entries
};

/// Stacks one column (luma for colour clips) over time; variation[t] = mean |strip[t+1] - strip[t]|.
ColumnProfile column_profile(const Clip& clip, int64_t column);

struct FrameMetrics {
    double en = 0, mi = 0, sd = 0, ssim = 0, vif = 0;
};

struct MetricReport {
    std::vector<FrameMetrics> per_frame;
    FrameMetrics means;
    /// Undefined for single-frame clips.
    std::optional<double> flow_d;
    FlowParams flow_params;
    VifNormalization vif_normalization = VifNormalization::sum;
    std::optional<ColumnProfile> column_profile;
};

struct EvaluationOptions {
    VifNormalization vif_normalization = VifNormalization::sum;
    FlowParams flow_params;
    std::optional<int64_t> profile_column;
};

MetricReport evaluate_video(const Clip& fused, const Clip& ir, const Clip& vi, const EvaluationOptions& options = {});

/// JSON document for one video (schema version 1).
std::string report_to_json(const MetricReport& report, const std::string& video_id = "");
/// Per-frame CSV: frame,en,mi,sd,ssim,vif.
std::string report_to_csv(const MetricReport& report);

} // namespace videofusion::metrics
