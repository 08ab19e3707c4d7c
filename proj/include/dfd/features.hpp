#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfd/raster.hpp"

namespace dfd {

// Raw per-pixel encoder output for one view, float32 row-major H x W x C.
struct FeatureImage {
  std::uint32_t view = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  const float* at(std::uint32_t x, std::uint32_t y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  float* at(std::uint32_t x, std::uint32_t y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

// Supervision set: surface samples with unit-norm features, row i of
// `features` (channels floats) belongs to samples[i].
struct SampleSet {
  std::vector<RenderSample> samples;
  std::vector<float> features;
  std::size_t channels = 0;
  std::size_t dropped = 0;  // samples removed for a zero raw feature

  std::size_t size() const { return samples.size(); }
  const float* feature(std::size_t i) const { return features.data() + i * channels; }
};

// Looks up each sample's pixel in its view's image and L2-normalizes it.
// If cameras are given, each image must match its camera's resolution.
SampleSet attach_features(const std::vector<RenderSample>& samples,
                          const std::vector<FeatureImage>& images,
                          std::span<const Camera> cameras = {});

enum class SynthMode { parts, smooth, mirror };
SynthMode parse_synth_mode(const std::string& name);
std::string to_string(SynthMode mode);

struct SynthOptions {
  std::uint32_t channels = 64;
  std::uint64_t seed = 0;
  std::uint32_t view = 0;
  // Per-face part labels, required for `parts`.
  std::span<const std::uint32_t> face_labels;
  // Normalization frame for smooth/mirror; defaults to the mesh's own box.
  // Set it to the original shape's box when rendering a decimated copy.
  std::optional<Bounds> frame;
};

// Built-in stand-ins for a pretrained encoder:
//   parts  - one-hot(face part label) + 0.05 * Gaussian direction noise
//   smooth - sin/cos of three fixed frequencies of the normalized point
//   mirror - like smooth, but even in x about the bounding-box center
// Uncovered pixels are zero.
FeatureImage synth_features(const Mesh& mesh, const RasterMap& raster, SynthMode mode,
                            const SynthOptions& options);

// Noise-free synthetic feature at a 3D point (smooth/mirror), normalized
// coordinates taken from `frame_mesh`'s bounding box.
void synth_point_feature(SynthMode mode, const Bounds& frame, const Vec3f& p,
                         std::uint32_t channels, float* out);

// Per-face part labels, one integer per line.
std::vector<std::uint32_t> load_face_labels(const std::filesystem::path& path, std::size_t face_count);
void save_face_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);

// .fmap: "DFDF", u32 version, u32 view, u32 H, u32 W, u32 C, H*W*C float32.
void write_fmap(const std::filesystem::path& path, const FeatureImage& image);
FeatureImage read_fmap(const std::filesystem::path& path);

// .rsmp: "DFDS", u32 version, u64 count, then per sample
// u32 view, u32 x, u32 y, u32 face, 3 x f32 barycentric, 3 x f32 point.
void write_rsmp(const std::filesystem::path& path, const std::vector<RenderSample>& samples);
std::vector<RenderSample> read_rsmp(const std::filesystem::path& path);

}  // namespace dfd
