#include "videofusion/video.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "videofusion/error.hpp"

namespace fs = std::filesystem;

namespace videofusion {

namespace {

// BT.601 luma weights.
constexpr double kR = 0.299;
constexpr double kB = 0.114;
constexpr double kG = 1.0 - kR - kB;
constexpr double kCbScale = 2.0 * (1.0 - kB);
constexpr double kCrScale = 2.0 * (1.0 - kR);

void require_three_channels(const torch::Tensor& t, const char* what) {
    if (t.dim() < 3 || t.size(-3) != 3) {
        throw DataError(std::string(what) + ": expected 3 channels at dim -3, got shape " +
                        c10::str(t.sizes()));
    }
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
           ext == ".tiff";
}

// Last run of digits in the stem, or -1.
long long frame_number(const fs::path& p) {
    const std::string stem = p.stem().string();
    auto end = stem.find_last_of("0123456789");
    if (end == std::string::npos) return -1;
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    return std::stoll(stem.substr(begin, end - begin + 1));
}

torch::Tensor mat_to_chw(const cv::Mat& frame, Modality modality) {
    cv::Mat converted;
    const int want = static_cast<int>(channels_for(modality));
    if (want == 1) {
        if (frame.channels() == 1) converted = frame;
        else if (frame.channels() == 3) cv::cvtColor(frame, converted, cv::COLOR_BGR2GRAY);
        else cv::cvtColor(frame, converted, cv::COLOR_BGRA2GRAY);
    } else {
        if (frame.channels() == 1) cv::cvtColor(frame, converted, cv::COLOR_GRAY2RGB);
        else if (frame.channels() == 3) cv::cvtColor(frame, converted, cv::COLOR_BGR2RGB);
        else cv::cvtColor(frame, converted, cv::COLOR_BGRA2RGB);
    }
    double scale = 1.0 / 255.0;
    if (converted.depth() == CV_16U) scale = 1.0 / 65535.0;
    else if (converted.depth() != CV_8U) throw DataError("unsupported frame bit depth");
    cv::Mat real;
    converted.convertTo(real, CV_32F, scale);
    real = real.clone();
    auto hwc = torch::from_blob(real.data, {real.rows, real.cols, want}, torch::kFloat32).clone();
    return hwc.permute({2, 0, 1}).contiguous();
}

cv::Mat chw_to_mat_u8(const torch::Tensor& chw) {
    auto u8 = quantize_u8(chw).permute({1, 2, 0}).contiguous();
    const int c = static_cast<int>(u8.size(2));
    cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC(c), u8.data_ptr<uint8_t>());
    cv::Mat out;
    if (c == 3) cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
    else out = mat.clone();
    return out;
}

Clip stack_frames(std::vector<torch::Tensor>& frames, Modality modality, double fps, const fs::path& path) {
    if (frames.empty()) throw DataError("zero frames in " + path.string());
    for (const auto& f : frames) {
        if (f.sizes() != frames.front().sizes()) {
            throw DataError("inconsistent frame dimensions in " + path.string() + ": " +
                            c10::str(frames.front().sizes()) + " vs " + c10::str(f.sizes()));
        }
    }
    return Clip::make(torch::stack(frames), modality, fps);
}

} // namespace

std::string to_string(Modality m) {
    switch (m) {
    case Modality::infrared: return "infrared";
    case Modality::visible: return "visible";
    case Modality::fused: return "fused";
    }
    return "unknown";
}

Modality modality_from_string(const std::string& name) {
    if (name == "infrared" || name == "ir") return Modality::infrared;
    if (name == "visible" || name == "vi") return Modality::visible;
    if (name == "fused") return Modality::fused;
    throw ConfigError("unknown modality '" + name + "'");
}

int64_t channels_for(Modality m) { return m == Modality::infrared ? 1 : 3; }

Clip Clip::make(torch::Tensor data, Modality modality, double frame_rate) {
    if (!data.defined() || data.dim() != 4) throw DataError("clip tensor must be T x C x H x W");
    if (data.size(0) < 1) throw DataError("clip must contain at least one frame");
    if (data.size(1) != channels_for(modality)) {
        throw DataError(to_string(modality) + " clip needs " + std::to_string(channels_for(modality)) +
                        " channels, got " + std::to_string(data.size(1)));
    }
    if (!(frame_rate > 0.0)) throw DataError("frame rate must be positive");
    if (data.numel() > 0) {
        auto lo = data.min().item<double>();
        auto hi = data.max().item<double>();
        if (!(lo >= 0.0 && hi <= 1.0)) {
            throw DataError("clip values must lie in [0,1], found range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
        }
    }
    return Clip{std::move(data), frame_rate, modality};
}

ClipPair ClipPair::make(Clip ir, Clip vi, std::string scene_id) {
    if (ir.modality != Modality::infrared || vi.modality != Modality::visible) {
        throw DataError("clip pair needs an infrared and a visible clip");
    }
    if (ir.frames() != vi.frames()) {
        throw DataError("frame count mismatch: infrared " + std::to_string(ir.frames()) + " vs visible " +
                        std::to_string(vi.frames()));
    }
    if (ir.height() != vi.height() || ir.width() != vi.width()) {
        throw DataError("spatial size mismatch between infrared and visible clips");
    }
    if (ir.frame_rate != vi.frame_rate) throw DataError("frame rate mismatch between modalities");
    return ClipPair{std::move(ir), std::move(vi), std::move(scene_id)};
}

torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb) {
    require_three_channels(rgb, "rgb_to_ycbcr");
    auto r = rgb.select(-3, 0);
    auto g = rgb.select(-3, 1);
    auto b = rgb.select(-3, 2);
    // Written relative to G so an achromatic pixel maps to its gray level exactly.
    auto y = g + kR * (r - g) + kB * (b - g);
    auto cb = (b - y) / kCbScale + 0.5;
    auto cr = (r - y) / kCrScale + 0.5;
    return torch::stack({y, cb, cr}, -3);
}

torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycc) {
    require_three_channels(ycc, "ycbcr_to_rgb");
    auto y = ycc.select(-3, 0);
    auto cb = ycc.select(-3, 1) - 0.5;
    auto cr = ycc.select(-3, 2) - 0.5;
    auto r = y + kCrScale * cr;
    auto b = y + kCbScale * cb;
    auto g = (y - kR * r - kB * b) / kG;
    return torch::stack({r, g, b}, -3);
}

torch::Tensor luma(const torch::Tensor& rgb) {
    require_three_channels(rgb, "luma");
    auto r = rgb.select(-3, 0);
    auto g = rgb.select(-3, 1);
    auto b = rgb.select(-3, 2);
    return (g + kR * (r - g) + kB * (b - g)).unsqueeze(-3);
}

Clip rgb_to_ycbcr(const Clip& clip) {
    if (clip.channels() != 3) throw DataError("rgb_to_ycbcr: single-channel input");
    return Clip{rgb_to_ycbcr(clip.data), clip.frame_rate, clip.modality};
}

Clip ycbcr_to_rgb(const Clip& ycc, Modality modality) {
    return Clip{ycbcr_to_rgb(ycc.data), ycc.frame_rate, modality};
}

std::vector<int64_t> window_starts(int64_t length, int64_t window, int64_t stride) {
    if (window < 1 || stride < 1) throw ConfigError("window and stride must be >= 1");
    if (length < 1) throw DataError("cannot window an empty clip");
    if (window >= length) return {0};
    std::vector<int64_t> starts;
    for (int64_t s = 0; s + window <= length; s += stride) starts.push_back(s);
    if (starts.back() + window < length) starts.push_back(length - window);
    return starts;
}

WindowedPairs window_clips(const ClipPair& pair, int64_t window, int64_t stride) {
    WindowedPairs out;
    out.window_exceeds_clip = window > pair.frames();
    out.starts = window_starts(pair.frames(), window, stride);
    const int64_t len = std::min(window, pair.frames());
    for (auto s : out.starts) {
        Clip ir{pair.ir.data.narrow(0, s, len), pair.ir.frame_rate, pair.ir.modality};
        Clip vi{pair.vi.data.narrow(0, s, len), pair.vi.frame_rate, pair.vi.modality};
        out.windows.push_back(ClipPair{std::move(ir), std::move(vi), pair.scene_id});
    }
    return out;
}

ClipManifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / kManifestName);
    if (!in) throw DataError("missing manifest " + (dir / kManifestName).string());
    nlohmann::json j;
    try {
        in >> j;
        ClipManifest m;
        m.scene_id = j.value("scene_id", std::string{});
        m.modality = modality_from_string(j.at("modality").get<std::string>());
        m.frame_rate = j.value("frame_rate", 30.0);
        m.frame_count = j.value("frame_count", int64_t{0});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest " + (dir / kManifestName).string() + ": " + e.what());
    }
}

Clip load_clip(const fs::path& path, Modality modality) {
    if (!fs::exists(path)) throw DataError("missing path " + path.string());
    std::vector<torch::Tensor> frames;

    if (fs::is_regular_file(path)) {
        cv::VideoCapture cap(path.string());
        if (!cap.isOpened()) throw DataError("unrecognized video container " + path.string());
        double fps = cap.get(cv::CAP_PROP_FPS);
        cv::Mat frame;
        while (cap.read(frame)) frames.push_back(mat_to_chw(frame, modality));
        return stack_frames(frames, modality, fps > 0 ? fps : 30.0, path);
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        auto na = frame_number(a), nb = frame_number(b);
        if (na != nb) return na < nb;
        return a.filename() < b.filename();
    });

    double fps = 30.0;
    if (fs::exists(path / kManifestName)) fps = read_manifest(path).frame_rate;

    frames.reserve(files.size());
    for (const auto& f : files) {
        cv::Mat img = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
        if (img.empty()) throw DataError("cannot decode frame " + f.string());
        frames.push_back(mat_to_chw(img, modality));
    }
    return stack_frames(frames, modality, fps, path);
}

void save_clip(const Clip& clip, const fs::path& dir, const std::string& scene_id) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".png") fs::remove(entry.path());
    }
    auto data = clip.data.detach().to(torch::kCPU);
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    for (int64_t t = 0; t < clip.frames(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06lld.png", static_cast<long long>(t));
        if (!cv::imwrite((dir / name).string(), chw_to_mat_u8(data[t]), params)) {
            throw DataError("cannot write frame " + (dir / name).string());
        }
    }
    nlohmann::json j{{"scene_id", scene_id},
                     {"modality", to_string(clip.modality)},
                     {"frame_rate", clip.frame_rate},
                     {"frame_count", clip.frames()},
                     {"checksum", clip_checksum(clip)}};
    std::ofstream out(dir / kManifestName);
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << j.dump(2) << '\n';
}

ClipPair load_pair(const fs::path& dir) {
    auto ir = load_clip(dir / "ir", Modality::infrared);
    auto vi = load_clip(dir / "vi", Modality::visible);
    std::string scene = dir.filename().string();
    if (scene.empty()) scene = dir.parent_path().filename().string();
    return ClipPair::make(std::move(ir), std::move(vi), scene);
}

void save_pair(const ClipPair& pair, const fs::path& dir) {
    save_clip(pair.ir, dir / "ir", pair.scene_id);
    save_clip(pair.vi, dir / "vi", pair.scene_id);
}

torch::Tensor quantize_u8(const torch::Tensor& values) {
    return (values.detach().to(torch::kCPU, torch::kFloat64) * 255.0).round().clamp(0.0, 255.0).to(torch::kUInt8);
}

std::string fnv1a_hex(const void* data, std::size_t size, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string clip_checksum(const Clip& clip) {
    auto q = quantize_u8(clip.data).contiguous();
    return fnv1a_hex(q.data_ptr<uint8_t>(), static_cast<std::size_t>(q.numel()));
}

} // namespace videofusion
