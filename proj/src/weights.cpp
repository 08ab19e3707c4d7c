#include "dfd/weights.hpp"

#include <algorithm>
#include <cmath>

#include "dfd/binary_io.hpp"

namespace dfd {

VertexFeatures compute_vertex_features(const FeatureField& field, std::span<const Vec3f> vertices) {
  VertexFeatures z;
  z.count = vertices.size();
  z.channels = field.channels();
  z.data = field.eval(vertices);
  return z;
}

float feature_distance(std::span<const float> a, std::span<const float> b) {
  float s = 0.f;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const float d = a[c] - b[c];
    s += d * d;
  }
  return 1.f - std::sqrt(s);
}

namespace {

// Squared distance with 16 independent lane sums, reduced in a fixed
// order. Without -ffast-math this is what lets the compiler vectorize.
constexpr std::size_t kLanes = 16;

template <std::size_t C>
float squared_distance_fixed(const float* a, const float* b) {
  float acc[kLanes] = {};
  constexpr std::size_t body = C / kLanes * kLanes;
  for (std::size_t c0 = 0; c0 < body; c0 += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) {
      const float d = a[c0 + l] - b[c0 + l];
      acc[l] += d * d;
    }
  for (std::size_t c = body; c < C; ++c) {
    const float d = a[c] - b[c];
    acc[c - body] += d * d;
  }
  float s = 0.f;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

float squared_distance_dynamic(const float* a, const float* b, std::size_t C) {
  float acc[kLanes] = {};
  const std::size_t body = C / kLanes * kLanes;
  for (std::size_t c0 = 0; c0 < body; c0 += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) {
      const float d = a[c0 + l] - b[c0 + l];
      acc[l] += d * d;
    }
  for (std::size_t c = body; c < C; ++c) {
    const float d = a[c] - b[c];
    acc[c - body] += d * d;
  }
  float s = 0.f;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

// A single row streams all of Z once and is bound by memory bandwidth;
// prefetching a few vertices ahead keeps the loads in flight.
constexpr std::size_t kPrefetchVertices = 16;

inline void prefetch_vertex(const float* p, std::size_t C) {
  for (std::size_t c = 0; c < C; c += 16) __builtin_prefetch(p + c);
}

template <std::size_t C>
void bind_row_fixed(const float* z, std::size_t n, const float* h, float* row) {
  for (std::size_t i = 0; i < n; ++i) {
    prefetch_vertex(z + (i + kPrefetchVertices) * C, C);
    row[i] = std::max(1.f - std::sqrt(squared_distance_fixed<C>(z + i * C, h)), 0.f);
  }
}

void bind_row_dynamic(const float* z, std::size_t n, std::size_t C, const float* h, float* row) {
  for (std::size_t i = 0; i < n; ++i) {
    prefetch_vertex(z + (i + kPrefetchVertices) * C, C);
    row[i] = std::max(1.f - std::sqrt(squared_distance_dynamic(z + i * C, h, C)), 0.f);
  }
}

void bind_range(const VertexFeatures& f, const float* h, float* row, std::size_t b, std::size_t e) {
  const float* z = f.row(b);
  switch (f.channels) {
    case 16: bind_row_fixed<16>(z, e - b, h, row + b); break;
    case 32: bind_row_fixed<32>(z, e - b, h, row + b); break;
    case 64: bind_row_fixed<64>(z, e - b, h, row + b); break;
    case 384: bind_row_fixed<384>(z, e - b, h, row + b); break;
    default: bind_row_dynamic(z, e - b, f.channels, h, row + b); break;
  }
}

// Vertices per tile when binding several rows: small enough that the
// tile's features stay in L2 while every handle passes over them.
constexpr std::size_t kTile = 1024;

}  // namespace

void bind_row(const VertexFeatures& features, const float* handle_feature, float* row) {
  parallel_for(features.count, 1 << 16, [&](std::size_t b, std::size_t e) {
    bind_range(features, handle_feature, row, b, e);
  });
  counters().distance_evals += features.count;
  ++counters().rows_bound;
}

WeightMatrix bind(const VertexFeatures& features, std::span<const std::uint32_t> handles) {
  for (auto h : handles)
    if (h >= features.count) throw InputError("handle index " + std::to_string(h) + " out of range");
  WeightMatrix w;
  w.vertex_count = features.count;
  w.handles.assign(handles.begin(), handles.end());
  w.rows.resize(handles.size());
  const std::size_t K = handles.size(), C = features.channels;
  std::vector<float> h(K * C);
  for (std::size_t k = 0; k < K; ++k) {
    w.rows[k].resize(features.count);
    std::copy_n(features.row(handles[k]), C, h.data() + k * C);
  }
  parallel_for(features.count, kTile, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; t += kTile)
      for (std::size_t k = 0; k < K; ++k) bind_range(features, h.data() + k * C, w.rows[k].data(), t, std::min(t + kTile, e));
  });
  counters().distance_evals += features.count * K;
  counters().rows_bound += K;
  return w;
}

std::vector<float> anchor_suppression(const VertexFeatures& features, std::span<const std::uint32_t> anchors) {
  for (auto a : anchors)
    if (a >= features.count) throw InputError("anchor index " + std::to_string(a) + " out of range");
  std::vector<float> suppress(features.count, 0.f);
  std::vector<float> row(features.count);
  for (auto a : anchors) {
    std::vector<float> h(features.row(a), features.row(a) + features.channels);
    bind_row(features, h.data(), row.data());
    for (std::size_t i = 0; i < row.size(); ++i) suppress[i] = std::max(suppress[i], row[i]);
  }
  return suppress;
}

WeightMatrix apply_anchors(const WeightMatrix& weights, const VertexFeatures& features,
                           std::span<const std::uint32_t> anchors) {
  WeightMatrix out = weights;
  if (anchors.empty()) return out;
  if (features.count != weights.vertex_count) throw InputError("features and weights disagree on n");
  const auto suppress = anchor_suppression(features, anchors);
  for (auto& row : out.rows)
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = std::max(row[i] - suppress[i], 0.f);
  out.anchors_applied = true;
  return out;
}

void apply_locality_row(std::span<float> row, const GeodesicRow& geodesic, double lambda) {
  if (lambda < 0) throw InputError("locality lambda must be >= 0");
  if (lambda == 0) return;
  if (geodesic.distances.size() != row.size()) throw InputError("geodesic row length mismatch");
  const float lam = static_cast<float>(lambda);
  for (std::size_t i = 0; i < row.size(); ++i) {
    const float g = std::clamp(geodesic.distances[i], 0.f, 1.f);
    row[i] *= std::pow(1.f - g, lam);
  }
}

WeightMatrix apply_locality(const WeightMatrix& weights, std::span<const GeodesicRow> geodesics, double lambda) {
  if (lambda < 0) throw InputError("locality lambda must be >= 0");
  WeightMatrix out = weights;
  out.lambda = lambda;
  if (lambda == 0) return out;
  if (geodesics.size() != weights.rows.size()) throw InputError("need one geodesic row per handle");
  for (std::size_t k = 0; k < out.rows.size(); ++k) {
    if (geodesics[k].source != weights.handles[k])
      throw InputError("geodesic row is not sourced at its handle vertex");
    apply_locality_row(out.rows[k], geodesics[k], lambda);
  }
  return out;
}

std::vector<float> pou_weights(const WeightMatrix& weights) {
  std::vector<double> sum(weights.vertex_count, 0.0);
  for (const auto& row : weights.rows)
    for (std::size_t i = 0; i < row.size(); ++i) sum[i] += row[i];
  std::vector<float> out(weights.vertex_count);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(std::max(1.0 - sum[i], 0.0));
  return out;
}

void write_weights(const std::filesystem::path& path, const WeightMatrix& weights) {
  io::Writer w(path);
  w.magic("DFWT");
  w.put<std::uint32_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(weights.handles.size()));
  w.put<std::uint64_t>(weights.vertex_count);
  w.put_array(weights.handles.data(), weights.handles.size());
  for (const auto& row : weights.rows) {
    if (row.size() != weights.vertex_count) throw InputError("weight row length mismatch");
    w.put_array(row.data(), row.size());
  }
  w.finish();
}

WeightMatrix read_weights(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DFWT");
  r.expect_version(1);
  WeightMatrix w;
  const auto K = r.get<std::uint32_t>();
  w.vertex_count = r.get<std::uint64_t>();
  const auto size = std::filesystem::file_size(path);
  if (static_cast<double>(K) * (static_cast<double>(w.vertex_count) * 4 + 4) + 20 > static_cast<double>(size))
    throw FormatError(path.string() + ": truncated file");
  w.handles.resize(K);
  r.get_array(w.handles.data(), K);
  w.rows.assign(K, std::vector<float>(w.vertex_count));
  for (auto& row : w.rows) r.get_array(row.data(), row.size());
  return w;
}

}  // namespace dfd
