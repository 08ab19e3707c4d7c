#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dfd/field.hpp"
#include "dfd/mesh.hpp"

namespace dfd {

// Z = field(V): one unit-norm feature row per vertex, row-major n x C.
struct VertexFeatures {
  std::size_t count = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  const float* row(std::size_t i) const { return data.data() + i * channels; }
};

VertexFeatures compute_vertex_features(const FeatureField& field, std::span<const Vec3f> vertices);

// Handle rows of the blending weight matrix; rows[k][i] is the weight of
// handle k on vertex i. The full n x n matrix is never formed.
struct WeightMatrix {
  std::vector<std::uint32_t> handles;
  std::vector<std::vector<float>> rows;
  std::size_t vertex_count = 0;
  bool anchors_applied = false;
  double lambda = 0.0;

  std::size_t handle_count() const { return handles.size(); }
};

// 1 - ||a - b||, in [-1, 1] for unit vectors.
float feature_distance(std::span<const float> a, std::span<const float> b);

// row[i] = max(1 - ||Z_i - z||, 0).
void bind_row(const VertexFeatures& features, const float* handle_feature, float* row);

// Closed-form binding: no optimization, K * n distance evaluations.
WeightMatrix bind(const VertexFeatures& features, std::span<const std::uint32_t> handles);

// Feature-space constraints: W_ki <- max(W_ki - max_a max(F(Z_a, Z_i), 0), 0).
// Defined on the pre-anchor matrix; an empty anchor list is a no-op.
WeightMatrix apply_anchors(const WeightMatrix& weights, const VertexFeatures& features,
                           std::span<const std::uint32_t> anchors);

// Per-vertex suppression max_a max(F(Z_a, Z_i), 0); apply_anchors uses it.
std::vector<float> anchor_suppression(const VertexFeatures& features, std::span<const std::uint32_t> anchors);

// Locality: W_ki <- W_ki * (1 - G_ki)^lambda, one geodesic row per handle.
WeightMatrix apply_locality(const WeightMatrix& weights, std::span<const GeodesicRow> geodesics, double lambda);
void apply_locality_row(std::span<float> row, const GeodesicRow& geodesic, double lambda);

// Partition-of-unity coefficient of the default transform: max(1 - sum_k W_ki, 0).
std::vector<float> pou_weights(const WeightMatrix& weights);

// .wts: "DFWT", u32 version, u32 K, u64 n, u32 handles[K], K*n float32.
void write_weights(const std::filesystem::path& path, const WeightMatrix& weights);
WeightMatrix read_weights(const std::filesystem::path& path);

}  // namespace dfd
