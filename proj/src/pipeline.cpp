#include "dfd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfd {

namespace {

// Cameras frame the original shape so decimation cannot move them.
void render_views(const Mesh& original, RenderedShape& out, const RenderConfig& config, bool keep_samples,
                  const ViewCallback& on_view) {
  Stopwatch clock;
  out.cameras = fibonacci_cameras(config.views, original, config.rig);
  for (std::uint32_t v = 0; v < config.views; ++v) {
    const RasterMap raster = rasterize(out.mesh, out.cameras[v]);
    if (keep_samples) {
      auto pts = surface_points(raster, out.mesh, v);
      out.samples.insert(out.samples.end(), pts.begin(), pts.end());
    }
    if (on_view) on_view(v, out.cameras[v], raster, out.mesh);
  }
  out.render_seconds = clock.seconds();
}

void decimate_into(const Mesh& mesh, RenderedShape& out, const RenderConfig& config) {
  if (config.views == 0) throw InputError("need at least one view");
  Stopwatch clock;
  out.decimated = mesh.faces.size() > config.decimate_threshold;
  out.mesh = out.decimated ? decimate_qem(mesh, config.decimate_threshold) : mesh;
  out.decimate_seconds = clock.seconds();
}

}  // namespace

RenderedShape render_shape(const Mesh& mesh, const RenderConfig& config, const ViewCallback& on_view) {
  RenderedShape out;
  decimate_into(mesh, out, config);
  render_views(mesh, out, config, true, on_view);
  return out;
}

PreparedSamples render_synthetic(const Mesh& mesh, const RenderConfig& config, const SyntheticSource& source) {
  std::vector<std::uint32_t> labels;
  PreparedSamples out;
  out.samples.channels = source.channels;
  const bool parts = source.mode == SynthMode::parts;
  if (parts && source.face_labels.size() != mesh.faces.size())
    throw InputError("parts features need one label per face");

  const Bounds frame = bounds_of(mesh);
  std::vector<RenderSample> view_samples;
  auto on_view = [&](std::uint32_t v, const Camera& cam, const RasterMap& raster, const Mesh&) {
    SynthOptions opts;
    opts.channels = source.channels;
    opts.seed = source.seed;
    opts.view = v;
    opts.face_labels = labels;
    opts.frame = frame;
    const FeatureImage img = synth_features(out.shape.mesh, raster, source.mode, opts);
    view_samples = surface_points(raster, out.shape.mesh, v);
    out.covered_pixels += view_samples.size();
    SampleSet part;
    if (source.vertex_only) {
      const Camera cams[1] = {cam};
      part = vertex_samples(out.shape.mesh, cams, std::span<const RasterMap>(&raster, 1),
                            std::span<const FeatureImage>(&img, 1));
      for (auto& s : part.samples) s.view = v;
    } else {
      part = attach_features(view_samples, {img});
    }
    out.samples.dropped += part.dropped;
    out.samples.samples.insert(out.samples.samples.end(), part.samples.begin(), part.samples.end());
    out.samples.features.insert(out.samples.features.end(), part.features.begin(), part.features.end());
  };

  // Labels must match the render mesh, which only exists after decimation.
  decimate_into(mesh, out.shape, config);
  if (parts) labels = out.shape.decimated ? transfer_face_labels(mesh, source.face_labels, out.shape.mesh)
                                          : source.face_labels;
  render_views(mesh, out.shape, config, false, on_view);
  return out;
}

std::vector<std::uint32_t> transfer_face_labels(const Mesh& from, const std::vector<std::uint32_t>& labels,
                                                const Mesh& to) {
  if (labels.size() != from.faces.size()) throw InputError("one label per face required");
  auto centroid = [](const Mesh& m, const Face& f) {
    return ((m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) / 3.f).eval();
  };
  // Uniform grid over source centroids, searched in growing shells.
  const Bounds b = bounds_of(from);
  const Vec3f extent = (b.max - b.min).cwiseMax(1e-12f);
  const int res = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(from.faces.size()) / 2.0)), 1, 256);
  auto cell_of = [&](const Vec3f& p) {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>((p[a] - b.min[a]) / extent[a] * static_cast<float>(res)), 0, res - 1);
    return c;
  };
  auto flat = [&](const Eigen::Vector3i& c) { return (static_cast<std::size_t>(c[2]) * res + c[1]) * res + c[0]; };
  std::vector<std::vector<std::uint32_t>> grid(static_cast<std::size_t>(res) * res * res);
  std::vector<Vec3f> cents(from.faces.size());
  for (std::size_t f = 0; f < from.faces.size(); ++f) {
    cents[f] = centroid(from, from.faces[f]);
    grid[flat(cell_of(cents[f]))].push_back(static_cast<std::uint32_t>(f));
  }
  const float cell = extent.maxCoeff() / static_cast<float>(res);

  std::vector<std::uint32_t> out(to.faces.size(), 0);
  parallel_for(to.faces.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t f = lo; f < hi; ++f) {
      const Vec3f p = centroid(to, to.faces[f]);
      const Eigen::Vector3i c = cell_of(p);
      float best = std::numeric_limits<float>::max();
      std::uint32_t best_face = 0;
      for (int r = 0; r <= res; ++r) {
        for (int z = c[2] - r; z <= c[2] + r; ++z)
          for (int y = c[1] - r; y <= c[1] + r; ++y)
            for (int x = c[0] - r; x <= c[0] + r; ++x) {
              if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
              if (x < 0 || y < 0 || z < 0 || x >= res || y >= res || z >= res) continue;
              for (auto g : grid[flat({x, y, z})]) {
                const float d = (cents[g] - p).squaredNorm();
                if (d < best) best = d, best_face = g;
              }
            }
        // Everything in shells beyond r is at least r * cell away.
        if (best < std::numeric_limits<float>::max() && std::sqrt(best) <= static_cast<float>(r) * cell) break;
      }
      out[f] = labels[best_face];
    }
  });
  return out;
}

}  // namespace dfd
