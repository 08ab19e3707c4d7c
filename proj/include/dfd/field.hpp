#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfd/features.hpp"
#include "dfd/mlp.hpp"

namespace dfd {

enum class Encoding : std::uint8_t { none = 0, fourier = 1 };

struct FieldSpec {
  Encoding encoding = Encoding::fourier;
  std::uint32_t bands = 6;
  std::uint32_t hidden = 256;
  std::uint32_t channels = 64;

  std::uint32_t input_width() const { return encoding == Encoding::fourier ? encoded_width(bands) : 3; }
  std::array<std::uint32_t, 5> widths() const {
    return {input_width(), hidden, hidden, hidden, channels};
  }
};

// Neural feature field: maps any 3D point to a unit-norm feature vector.
// Points are first mapped into [-1,1]^3 by the frame captured at training.
class FeatureField {
 public:
  FeatureField() = default;
  FeatureField(const FieldSpec& spec, const Bounds& frame, std::uint64_t seed);

  const FieldSpec& spec() const { return spec_; }
  const Bounds& frame() const { return frame_; }
  std::uint32_t channels() const { return spec_.channels; }
  Mlp<float>& network() { return net_; }
  const Mlp<float>& network() const { return net_; }

  // Encoded network input for a batch of points (columns).
  Mlp<float>::Matrix encode(std::span<const Vec3f> points) const;

  // Row-major points.size() x channels output, every row unit-norm.
  std::vector<float> eval(std::span<const Vec3f> points) const;

 private:
  FieldSpec spec_;
  Bounds frame_{Vec3f::Constant(-1.f), Vec3f::Constant(1.f)};
  Mlp<float> net_;
};

inline std::vector<float> eval_field(const FeatureField& field, std::span<const Vec3f> points) {
  return field.eval(points);
}

struct TrainConfig {
  FieldSpec spec;
  std::uint32_t epochs = 10;
  std::uint64_t max_steps = 0;       // 0 = no cap
  std::uint64_t sample_budget = 0;   // stop after this many processed samples; 0 = epochs only
  std::uint32_t batch = 65536;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double time_budget_seconds = 0;    // 0 = unlimited
  std::uint32_t chunk = 4096;        // columns per gradient chunk (fixed reduction order)
};

struct TrainReport {
  // Entry 0 is the pre-training loss on a fixed subsample; entry e is the
  // mean per-sample loss over epoch e.
  std::vector<double> epoch_loss;
  std::size_t sample_count = 0;
  std::uint64_t steps = 0;
  std::uint64_t processed_samples = 0;
  double decimate_seconds = 0;
  double render_seconds = 0;
  double train_seconds = 0;
  bool budget_exceeded = false;
  TrainConfig config;

  std::string to_json() const;
};

// Training stopped because the loss went non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainReport report)
      : std::runtime_error(what), report(std::move(report)) {}
  TrainReport report;
};

struct TrainedField {
  FeatureField field;
  TrainReport report;
};

// Minimizes sum ||field(P) - Z||^2 over the sample set with Adam.
TrainedField train_field(const SampleSet& samples, const TrainConfig& config, const Bounds& frame);

// Vertex-only supervision for each view: the pixel under each visible
// vertex's projection, one vertex per pixel. Positions are the vertices.
SampleSet vertex_samples(const Mesh& mesh, std::span<const Camera> cameras,
                         std::span<const RasterMap> rasters, std::span<const FeatureImage> images);

// Vertex-distillation baseline, trained until it has processed as many
// samples as `matched_samples` (typically barycentric |samples| * epochs).
TrainedField train_field_vertex_ablation(const Mesh& mesh, std::span<const Camera> cameras,
                                         std::span<const RasterMap> rasters,
                                         std::span<const FeatureImage> images, const TrainConfig& config,
                                         std::uint64_t matched_samples, const Bounds& frame);

// .dfdf checkpoint: "DFDW", u32 version, u8 encoding, u32 bands,
// u32 widths[5], u32 C, f32 frame min/max (6), then parameters.
void save_field(const std::filesystem::path& path, const FeatureField& field);
FeatureField load_field(const std::filesystem::path& path);

}  // namespace dfd
