#include "videofusion/metrics.hpp"

#include <array>
#include <cmath>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "videofusion/error.hpp"

namespace videofusion::metrics {

namespace {

void require_same_size(const cv::Mat& a, const cv::Mat& b, const char* what) {
    if (a.size() != b.size()) throw DataError(std::string(what) + ": frame size mismatch");
}

std::array<double, 256> histogram(const cv::Mat& frame) {
    std::array<double, 256> h{};
    for (int r = 0; r < frame.rows; ++r) {
        const auto* row = frame.ptr<double>(r);
        for (int c = 0; c < frame.cols; ++c) h[static_cast<size_t>(std::lround(row[c]))] += 1.0;
    }
    return h;
}

double entropy_of(const double* p, size_t n) {
    double e = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (p[i] > 0.0) e -= p[i] * std::log2(p[i]);
    }
    return e;
}

cv::Mat gaussian_window(int size, double sigma) {
    cv::Mat g = cv::getGaussianKernel(size, sigma, CV_64F);
    cv::Mat w = g * g.t();
    return w / cv::sum(w)[0];
}

// Correlation restricted to positions where the window fits entirely (MATLAB 'valid').
cv::Mat filter_valid(const cv::Mat& img, const cv::Mat& window) {
    cv::Mat full;
    cv::filter2D(img, full, CV_64F, window, cv::Point(-1, -1), 0, cv::BORDER_CONSTANT);
    const int rh = window.rows / 2, rw = window.cols / 2;
    return full(cv::Range(rh, img.rows - (window.rows - 1 - rh)), cv::Range(rw, img.cols - (window.cols - 1 - rw))).clone();
}

cv::Mat subsample2(const cv::Mat& img) {
    cv::Mat out((img.rows + 1) / 2, (img.cols + 1) / 2, CV_64F);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at<double>(r, c) = img.at<double>(2 * r, 2 * c);
    return out;
}

cv::Mat to_u8(const cv::Mat& m) {
    cv::Mat out;
    m.convertTo(out, CV_8U);
    return out;
}

void check_triple(const Clip& fused, const Clip& ir, const Clip& vi) {
    if (fused.frames() != ir.frames() || fused.frames() != vi.frames()) {
        throw DataError("fused/infrared/visible frame counts differ");
    }
    if (fused.height() != ir.height() || fused.height() != vi.height() || fused.width() != ir.width() ||
        fused.width() != vi.width()) {
        throw DataError("fused/infrared/visible frame sizes differ");
    }
}

} // namespace

cv::Mat gray_frame(const torch::Tensor& chw) {
    auto x = chw.detach().to(torch::kCPU);
    if (x.size(0) == 3) x = luma(x.to(torch::kFloat64));
    auto u8 = quantize_u8(x[0]).to(torch::kFloat64).contiguous();
    cv::Mat m(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_64F, u8.data_ptr<double>());
    return m.clone();
}

std::vector<cv::Mat> gray_frames(const Clip& clip) {
    std::vector<cv::Mat> out;
    out.reserve(static_cast<size_t>(clip.frames()));
    for (int64_t t = 0; t < clip.frames(); ++t) out.push_back(gray_frame(clip.data[t]));
    return out;
}

double entropy(const cv::Mat& frame) {
    auto h = histogram(frame);
    const double n = static_cast<double>(frame.total());
    for (auto& v : h) v /= n;
    return entropy_of(h.data(), h.size());
}

double mutual_information(const cv::Mat& a, const cv::Mat& b) {
    require_same_size(a, b, "mutual_information");
    std::vector<double> joint(256 * 256, 0.0);
    for (int r = 0; r < a.rows; ++r) {
        const auto* ra = a.ptr<double>(r);
        const auto* rb = b.ptr<double>(r);
        for (int c = 0; c < a.cols; ++c) joint[static_cast<size_t>(std::lround(ra[c]) * 256 + std::lround(rb[c]))] += 1.0;
    }
    const double n = static_cast<double>(a.total());
    std::array<double, 256> pa{}, pb{};
    for (size_t i = 0; i < 256; ++i) {
        for (size_t j = 0; j < 256; ++j) {
            auto& v = joint[i * 256 + j];
            v /= n;
            pa[i] += v;
            pb[j] += v;
        }
    }
    // I(A;B) = H(A) + H(B) - H(A,B)
    return entropy_of(pa.data(), 256) + entropy_of(pb.data(), 256) - entropy_of(joint.data(), joint.size());
}

double mutual_information(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi) {
    return mutual_information(fused, ir) + mutual_information(fused, vi);
}

double std_dev(const cv::Mat& frame) {
    cv::Scalar mean, sd;
    cv::meanStdDev(frame, mean, sd);
    return sd[0];
}

double ssim(const cv::Mat& a, const cv::Mat& b) {
    require_same_size(a, b, "ssim");
    if (a.rows < 11 || a.cols < 11) throw DataError("ssim: frames smaller than the 11x11 window");
    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    const cv::Mat w = gaussian_window(11, 1.5);
    cv::Mat mu_a = filter_valid(a, w), mu_b = filter_valid(b, w);
    cv::Mat aa = filter_valid(a.mul(a), w) - mu_a.mul(mu_a);
    cv::Mat bb = filter_valid(b.mul(b), w) - mu_b.mul(mu_b);
    cv::Mat ab = filter_valid(a.mul(b), w) - mu_a.mul(mu_b);
    cv::Mat num = (2 * mu_a.mul(mu_b) + c1).mul(2 * ab + c2);
    cv::Mat den = (mu_a.mul(mu_a) + mu_b.mul(mu_b) + c1).mul(aa + bb + c2);
    cv::Mat map;
    cv::divide(num, den, map);
    return cv::mean(map)[0];
}

double ssim_fusion(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi) {
    return 0.5 * (ssim(fused, ir) + ssim(fused, vi));
}

std::optional<double> vif_pixel(const cv::Mat& reference, const cv::Mat& distorted) {
    require_same_size(reference, distorted, "vif");
    constexpr double sigma_nsq = 2.0;
    constexpr double eps = 1e-10;
    cv::Mat ref = reference.clone(), dist = distorted.clone();
    double num = 0.0, den = 0.0;
    for (int scale = 1; scale <= 4; ++scale) {
        const int n = (1 << (4 - scale + 1)) + 1;
        const cv::Mat win = gaussian_window(n, n / 5.0);
        if (scale > 1) {
            if (ref.rows < n || ref.cols < n) break;
            ref = subsample2(filter_valid(ref, win));
            dist = subsample2(filter_valid(dist, win));
        }
        if (ref.rows < n || ref.cols < n) {
            if (scale == 1) throw DataError("vif: frames smaller than the 17x17 window");
            break; // coarser scales do not fit small frames
        }
        cv::Mat mu1 = filter_valid(ref, win), mu2 = filter_valid(dist, win);
        cv::Mat s1 = filter_valid(ref.mul(ref), win) - mu1.mul(mu1);
        cv::Mat s2 = filter_valid(dist.mul(dist), win) - mu2.mul(mu2);
        cv::Mat s12 = filter_valid(ref.mul(dist), win) - mu1.mul(mu2);
        for (int r = 0; r < s1.rows; ++r) {
            for (int c = 0; c < s1.cols; ++c) {
                double v1 = std::max(0.0, s1.at<double>(r, c));
                double v2 = std::max(0.0, s2.at<double>(r, c));
                const double cov = s12.at<double>(r, c);
                double g = cov / (v1 + eps);
                double sv = v2 - g * cov;
                if (v1 < eps) {
                    g = 0.0;
                    sv = v2;
                    v1 = 0.0;
                }
                if (v2 < eps) {
                    g = 0.0;
                    sv = 0.0;
                }
                if (g < 0.0) {
                    sv = v2;
                    g = 0.0;
                }
                sv = std::max(sv, eps);
                num += std::log10(1.0 + g * g * v1 / (sv + sigma_nsq));
                den += std::log10(1.0 + v1 / sigma_nsq);
            }
        }
    }
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

double vif_fusion(const cv::Mat& fused, const cv::Mat& ir, const cv::Mat& vi, VifNormalization norm) {
    double total = 0.0;
    int terms = 0;
    for (const auto* src : {&ir, &vi}) {
        if (auto v = vif_pixel(*src, fused)) {
            total += *v;
            ++terms;
        }
    }
    if (norm == VifNormalization::mean && terms > 0) total /= terms;
    return total;
}

cv::Mat dense_flow(const cv::Mat& from, const cv::Mat& to, const FlowParams& p) {
    cv::Mat flow;
    cv::calcOpticalFlowFarneback(to_u8(from), to_u8(to), flow, p.pyr_scale, p.levels, p.winsize, p.iterations, p.poly_n,
                                 p.poly_sigma, 0);
    return flow;
}

double mean_epe(const cv::Mat& a, const cv::Mat& b) {
    if (a.size() != b.size()) throw DataError("flow size mismatch");
    double sum = 0.0;
    for (int r = 0; r < a.rows; ++r) {
        const auto* pa = a.ptr<cv::Vec2f>(r);
        const auto* pb = b.ptr<cv::Vec2f>(r);
        for (int c = 0; c < a.cols; ++c) {
            const double dx = pa[c][0] - pb[c][0], dy = pa[c][1] - pb[c][1];
            sum += std::sqrt(dx * dx + dy * dy);
        }
    }
    return sum / static_cast<double>(a.total());
}

double flow_consistency(const std::vector<cv::Mat>& fused, const std::vector<cv::Mat>& ir,
                        const std::vector<cv::Mat>& vi, const FlowParams& params) {
    if (fused.size() < 2) throw DataError("flowD needs at least two frames");
    if (fused.size() != ir.size() || fused.size() != vi.size()) throw DataError("flowD: frame count mismatch");
    double total = 0.0;
    for (size_t t = 0; t + 1 < fused.size(); ++t) {
        auto f = dense_flow(fused[t], fused[t + 1], params);
        auto fi = dense_flow(ir[t], ir[t + 1], params);
        auto fv = dense_flow(vi[t], vi[t + 1], params);
        total += 0.5 * (mean_epe(f, fi) + mean_epe(f, fv));
    }
    return total / static_cast<double>(fused.size() - 1);
}

double flow_consistency(const Clip& fused, const Clip& ir, const Clip& vi, const FlowParams& params) {
    check_triple(fused, ir, vi);
    return flow_consistency(gray_frames(fused), gray_frames(ir), gray_frames(vi), params);
}

ColumnProfile column_profile(const Clip& clip, int64_t column) {
    if (column < 0 || column >= clip.width()) {
        throw DataError("column " + std::to_string(column) + " outside [0, " + std::to_string(clip.width()) + ")");
    }
    auto data = clip.data.detach().to(torch::kCPU, torch::kFloat64);
    auto gray = clip.channels() == 3 ? luma(data) : data;
    ColumnProfile out;
    out.column = column;
    out.strip = gray.select(1, 0).select(2, column).contiguous(); // T x H
    for (int64_t t = 0; t + 1 < clip.frames(); ++t) {
        out.variation.push_back((out.strip[t + 1] - out.strip[t]).abs().mean().item<double>());
    }
    return out;
}

MetricReport evaluate_video(const Clip& fused, const Clip& ir, const Clip& vi, const EvaluationOptions& options) {
    check_triple(fused, ir, vi);
    const auto gf = gray_frames(fused), gi = gray_frames(ir), gv = gray_frames(vi);
    MetricReport report;
    report.flow_params = options.flow_params;
    report.vif_normalization = options.vif_normalization;
    for (size_t t = 0; t < gf.size(); ++t) {
        FrameMetrics m;
        m.en = entropy(gf[t]);
        m.mi = mutual_information(gf[t], gi[t], gv[t]);
        m.sd = std_dev(gf[t]);
        m.ssim = ssim_fusion(gf[t], gi[t], gv[t]);
        m.vif = vif_fusion(gf[t], gi[t], gv[t], options.vif_normalization);
        report.per_frame.push_back(m);
        report.means.en += m.en;
        report.means.mi += m.mi;
        report.means.sd += m.sd;
        report.means.ssim += m.ssim;
        report.means.vif += m.vif;
    }
    const double n = static_cast<double>(gf.size());
    report.means.en /= n;
    report.means.mi /= n;
    report.means.sd /= n;
    report.means.ssim /= n;
    report.means.vif /= n;
    if (gf.size() >= 2) report.flow_d = flow_consistency(gf, gi, gv, options.flow_params);
    if (options.profile_column) report.column_profile = column_profile(fused, *options.profile_column);
    return report;
}

namespace {

nlohmann::json frame_json(const FrameMetrics& m) {
    return {{"en", m.en}, {"mi", m.mi}, {"sd", m.sd}, {"ssim", m.ssim}, {"vif", m.vif}};
}

} // namespace

std::string report_to_json(const MetricReport& report, const std::string& video_id) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["video"] = video_id;
    j["frames"] = report.per_frame.size();
    j["means"] = frame_json(report.means);
    j["flow_d"] = report.flow_d ? nlohmann::json(*report.flow_d) : nlohmann::json(nullptr);
    const auto& p = report.flow_params;
    j["flow_estimator"] = {{"method", "farneback"}, {"pyr_scale", p.pyr_scale}, {"levels", p.levels},
                           {"winsize", p.winsize},  {"iterations", p.iterations}, {"poly_n", p.poly_n},
                           {"poly_sigma", p.poly_sigma}};
    j["vif_normalization"] = report.vif_normalization == VifNormalization::sum ? "sum" : "mean";
    j["per_frame"] = nlohmann::json::array();
    for (const auto& m : report.per_frame) j["per_frame"].push_back(frame_json(m));
    if (report.column_profile) {
        j["column_profile"] = {{"column", report.column_profile->column},
                               {"variation", report.column_profile->variation}};
    }
    return j.dump(2);
}

std::string report_to_csv(const MetricReport& report) {
    std::string out = "frame,en,mi,sd,ssim,vif\n";
    char line[256];
    for (size_t t = 0; t < report.per_frame.size(); ++t) {
        const auto& m = report.per_frame[t];
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, m.en, m.mi, m.sd, m.ssim, m.vif);
        out += line;
    }
    return out;
}

} // namespace videofusion::metrics
