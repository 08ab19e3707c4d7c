#pragma once

// Shared fixtures and independent reference implementations for the tests.
// Oracles here deliberately avoid library code paths they check.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>

#include "dfd/mesh.hpp"
#include "dfd/pipeline.hpp"
#include "dfd/weights.hpp"

namespace dfd::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dfd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct Hit {
  std::uint32_t face = std::numeric_limits<std::uint32_t>::max();
  double t = std::numeric_limits<double>::infinity();
  double u = 0, v = 0;  // weights of vertices 1 and 2
};

// Moller-Trumbore, two-sided.
inline std::optional<Hit> ray_triangle(const Vec3d& o, const Vec3d& d, const Vec3d& a, const Vec3d& b,
                                       const Vec3d& c) {
  const Vec3d e1 = b - a, e2 = c - a;
  const Vec3d p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-18) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3d s = o - a;
  const double u = s.dot(p) * inv;
  if (u < -1e-12 || u > 1 + 1e-12) return std::nullopt;
  const Vec3d q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < -1e-12 || u + v > 1 + 1e-12) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 0) return std::nullopt;
  return Hit{0, t, u, v};
}

inline std::optional<Hit> raycast(const Mesh& m, const Vec3d& o, const Vec3d& d) {
  std::optional<Hit> best;
  for (std::uint32_t f = 0; f < m.faces.size(); ++f) {
    const auto& F = m.faces[f];
    auto h = ray_triangle(o, d, m.vertices[F[0]].cast<double>(), m.vertices[F[1]].cast<double>(),
                          m.vertices[F[2]].cast<double>());
    if (h && (!best || h->t < best->t)) {
      h->face = f;
      best = h;
    }
  }
  return best;
}

// Closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3d closest_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  const Vec3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vec3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double point_mesh_distance(const Vec3d& p, const Mesh& m) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : m.faces) {
    const Vec3d q = closest_on_triangle(p, m.vertices[f[0]].cast<double>(), m.vertices[f[1]].cast<double>(),
                                        m.vertices[f[2]].cast<double>());
    best = std::min(best, (q - p).norm());
  }
  return best;
}

// Symmetric Hausdorff distance sampled at vertices and face centroids.
inline double hausdorff(const Mesh& a, const Mesh& b) {
  auto one_way = [](const Mesh& from, const Mesh& to) {
    double h = 0;
    for (const auto& v : from.vertices) h = std::max(h, point_mesh_distance(v.cast<double>(), to));
    for (const auto& f : from.faces) {
      const Vec3d c = (from.vertices[f[0]] + from.vertices[f[1]] + from.vertices[f[2]]).cast<double>() / 3.0;
      h = std::max(h, point_mesh_distance(c, to));
    }
    return h;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

// Scalar weight formula, in double: max(1 - ||z_i - z_h||, 0).
inline double reference_weight(const VertexFeatures& z, std::size_t i, std::size_t h) {
  double s = 0;
  for (std::size_t c = 0; c < z.channels; ++c) {
    const double d = static_cast<double>(z.row(i)[c]) - static_cast<double>(z.row(h)[c]);
    s += d * d;
  }
  return std::max(1.0 - std::sqrt(s), 0.0);
}

// Random unit-norm features for n vertices.
inline VertexFeatures random_features(std::size_t n, std::size_t channels, std::uint64_t seed,
                                      double spread = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  VertexFeatures z;
  z.count = n;
  z.channels = channels;
  z.data.resize(n * channels);
  std::vector<double> base(channels);
  for (auto& b : base) b = g(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0;
    std::vector<double> v(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      v[c] = base[c] + spread * std::sqrt(static_cast<double>(channels)) * g(rng) / 4.0;
      norm += v[c] * v[c];
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < channels; ++c) z.data[i * channels + c] = static_cast<float>(v[c] / norm);
  }
  return z;
}

// Asymmetric L-shaped solid made of three boxes.
inline Mesh l_shape() {
  return shapes::merge({shapes::box({0, 0, 0}, {2, 0.5f, 0.5f}), shapes::box({0, 0.5f, 0}, {0.5f, 2.0f, 0.5f}),
                        shapes::box({0, 2.0f, 0}, {0.25f, 2.5f, 0.25f})});
}

// Two separated, subdivided boxes with per-face part labels 0 (x < 0) and 1.
struct TwoParts {
  Mesh mesh;
  std::vector<std::uint32_t> labels;
};
inline TwoParts two_parts(int subdivisions = 3) {
  Mesh a = shapes::box({-1.2f, -0.5f, -0.5f}, {-0.2f, 0.5f, 0.5f});
  Mesh b = shapes::box({0.2f, -0.5f, -0.5f}, {1.2f, 0.5f, 0.5f});
  for (int i = 0; i < subdivisions; ++i) {
    a = shapes::subdivide(a);
    b = shapes::subdivide(b);
  }
  TwoParts t;
  t.labels.assign(a.face_count(), 0);
  t.labels.resize(a.face_count() + b.face_count(), 1);
  t.mesh = shapes::merge({a, b});
  return t;
}

// Small, fast training run shared by suites that need a real field.
struct QuickField {
  std::uint32_t views = 20;
  std::uint32_t resolution = 128;
  std::uint64_t steps = 300;
  std::uint32_t batch = 2048;
  double lr = 3e-3;
  std::uint32_t channels = 32;
  std::uint64_t seed = 0;
};

inline TrainedField quick_field(const Mesh& mesh, SynthMode mode, const QuickField& q = {},
                                std::vector<std::uint32_t> labels = {}) {
  RenderConfig rc;
  rc.views = q.views;
  rc.rig.resolution = q.resolution;
  SyntheticSource src;
  src.mode = mode;
  src.channels = q.channels;
  src.seed = q.seed;
  src.face_labels = std::move(labels);
  const auto prep = render_synthetic(mesh, rc, src);
  TrainConfig tc;
  tc.spec.channels = q.channels;
  tc.epochs = 1000;
  tc.max_steps = q.steps;
  tc.batch = q.batch;
  tc.learning_rate = q.lr;
  tc.seed = q.seed;
  return train_field(prep.samples, tc, field_frame(mesh));
}

// Mean over mesh edges of |w_i - w_j|.
inline double roughness(const Mesh& mesh, const std::vector<float>& w) {
  const auto edges = unique_edges(mesh);
  double s = 0;
  for (const auto& e : edges) s += std::abs(static_cast<double>(w[e[0]]) - w[e[1]]);
  return s / static_cast<double>(edges.size());
}

}  // namespace dfd::test
