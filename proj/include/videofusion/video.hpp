#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace videofusion {

enum class Modality { infrared, visible, fused };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& name);

/// Expected channel count for a modality: 1 for infrared, 3 otherwise.
int64_t channels_for(Modality m);

/**
 * A T x C x H x W video segment with values in [0, 1].
 *
 * Construct through Clip::make, which validates the invariants. The tensor may be
 * float32 or float64; all library code preserves the incoming dtype.
 */
struct Clip {
    torch::Tensor data;
    double frame_rate = 30.0;
    Modality modality = Modality::visible;

    static Clip make(torch::Tensor data, Modality modality, double frame_rate = 30.0);

    int64_t frames() const { return data.size(0); }
    int64_t channels() const { return data.size(1); }
    int64_t height() const { return data.size(2); }
    int64_t width() const { return data.size(3); }
};

/// Synchronized, registered infrared (1-channel) and visible (3-channel) clips.
struct ClipPair {
    Clip ir;
    Clip vi;
    std::string scene_id;

    static ClipPair make(Clip ir, Clip vi, std::string scene_id);
    int64_t frames() const { return ir.frames(); }
};

// ---- color space (ITU-R BT.601 full range, chroma offset by 0.5) ----

/// Converts RGB to Y/Cb/Cr along dimension -3. Differentiable.
torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb);
/// Exact algebraic inverse of rgb_to_ycbcr.
torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycc);
/// Luma only, keeping a singleton channel dimension at -3.
torch::Tensor luma(const torch::Tensor& rgb);

Clip rgb_to_ycbcr(const Clip& clip);
Clip ycbcr_to_rgb(const Clip& ycc, Modality modality = Modality::visible);

// ---- windowing ----

/// Start offsets of `window`-frame windows over `length` frames; the tail window is
/// clamped to end at the last frame instead of padding.
std::vector<int64_t> window_starts(int64_t length, int64_t window, int64_t stride);

struct WindowedPairs {
    std::vector<ClipPair> windows;
    std::vector<int64_t> starts;
    /// Set when the requested window exceeded the clip and one full-clip window was emitted.
    bool window_exceeds_clip = false;
};

WindowedPairs window_clips(const ClipPair& pair, int64_t window, int64_t stride);

// ---- on-disk frame directories ----

/// Contents of the `clip.json` manifest written next to the frames.
struct ClipManifest {
    std::string scene_id;
    Modality modality = Modality::visible;
    double frame_rate = 30.0;
    int64_t frame_count = 0;
};

inline constexpr const char* kManifestName = "clip.json";

/// Loads `frame_%06d.png` style frame directories (any numerically named image files)
/// or a video container file. Frame rate and scene id come from the manifest when present.
Clip load_clip(const std::filesystem::path& path, Modality modality);

/// Writes 8-bit PNG frames `frame_%06d.png` plus a manifest. Existing frames are replaced.
void save_clip(const Clip& clip, const std::filesystem::path& dir, const std::string& scene_id = "");

ClipManifest read_manifest(const std::filesystem::path& dir);

/// Loads `<dir>/ir` and `<dir>/vi` as a ClipPair named after the directory.
ClipPair load_pair(const std::filesystem::path& dir);
void save_pair(const ClipPair& pair, const std::filesystem::path& dir);

/// Round-to-nearest 8-bit quantization of [0,1] values, as written to disk.
torch::Tensor quantize_u8(const torch::Tensor& values);

/// FNV-1a 64-bit hash over the 8-bit quantized clip, formatted as 16 hex digits.
std::string clip_checksum(const Clip& clip);
std::string fnv1a_hex(const void* data, std::size_t size, std::uint64_t seed = 1469598103934665603ULL);

} // namespace videofusion
