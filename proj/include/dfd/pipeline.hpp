#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dfd/features.hpp"
#include "dfd/field.hpp"
#include "dfd/raster.hpp"

namespace dfd {

struct RenderConfig {
  std::uint32_t views = 100;
  std::size_t decimate_threshold = 50000;  // decimate only above this many faces
  CameraRig rig;
};

// The shape as rendered: decimated copy if it was large, with its cameras
// and every covered pixel's surface sample (left empty by
// render_synthetic, whose SampleSet already holds them).
struct RenderedShape {
  Mesh mesh;
  bool decimated = false;
  std::vector<Camera> cameras;
  std::vector<RenderSample> samples;
  double decimate_seconds = 0;
  double render_seconds = 0;
};

// Called once per view while its raster is alive (writing images, making
// features), in view order. The raster indexes `render_mesh`.
using ViewCallback =
    std::function<void(std::uint32_t view, const Camera&, const RasterMap&, const Mesh& render_mesh)>;

RenderedShape render_shape(const Mesh& mesh, const RenderConfig& config, const ViewCallback& on_view = {});

// Renders and attaches built-in synthetic features view by view, so no
// more than one raster and one feature image exist at a time.
struct SyntheticSource {
  SynthMode mode = SynthMode::smooth;
  std::uint32_t channels = 64;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> face_labels;  // on the input mesh; parts only
  bool vertex_only = false;                // vertex-distillation ablation
};

struct PreparedSamples {
  RenderedShape shape;
  SampleSet samples;
  std::size_t covered_pixels = 0;  // barycentric sample count, whatever the mode
};

PreparedSamples render_synthetic(const Mesh& mesh, const RenderConfig& config, const SyntheticSource& source);

// Face labels carried over to a decimated mesh by nearest face centroid.
std::vector<std::uint32_t> transfer_face_labels(const Mesh& from, const std::vector<std::uint32_t>& labels,
                                                const Mesh& to);

// Frame used to normalize field inputs: the original mesh's bounding box,
// so a field trained on a decimated copy applies to the full mesh.
inline Bounds field_frame(const Mesh& mesh) { return bounds_of(mesh); }

}  // namespace dfd
