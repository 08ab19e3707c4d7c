#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfd/field.hpp"
#include "dfd/transform.hpp"
#include "dfd/weights.hpp"

namespace dfd {

// Plane {x : normal . x = offset}. `score` is the mean reflected-feature
// distance and `accepted` means score < epsilon.
struct SymmetryPlane {
  Vec3d normal = Vec3d::UnitX();
  double offset = 0.0;
  double score = 0.0;
  bool accepted = false;

  static SymmetryPlane through(const Vec3d& normal, const Vec3d& point) {
    const Vec3d n = normal.normalized();
    return {n, n.dot(point), 0.0, false};
  }
  double signed_distance(const Vec3d& p) const { return normal.dot(p) - offset; }
  SymmetryPlane flipped() const { return {-normal, -offset, score, accepted}; }
};

inline constexpr double kDefaultSymmetryEpsilon = 0.1;

// Householder reflection across the plane.
Vec3d reflect_point(const SymmetryPlane& plane, const Vec3d& p);

// R o D o R, the mirror image of an affine map. An involution.
AffineTransform reflect_transform(const SymmetryPlane& plane, const AffineTransform& d);

// Scores a candidate plane:
//   (1/|V|) * sum over off-plane vertices of ||field(v) - field(R(v))||.
// Reflected points are usually off the surface; the field is evaluated
// there anyway. Vertices within 1e-9 * bbox diagonal of the plane count in
// |V| but contribute zero.
SymmetryPlane evaluate_plane(const FeatureField& field, const Mesh& mesh, const SymmetryPlane& plane,
                             double epsilon = kDefaultSymmetryEpsilon);
// Same, reusing precomputed vertex features.
SymmetryPlane evaluate_plane(const FeatureField& field, const Mesh& mesh, const VertexFeatures& features,
                             const SymmetryPlane& plane, double epsilon = kDefaultSymmetryEpsilon);

// The three axis-aligned planes through the bounding-box center, scored.
std::vector<SymmetryPlane> detect_axis_symmetries(const FeatureField& field, const Mesh& mesh,
                                                  double epsilon = kDefaultSymmetryEpsilon);
std::vector<SymmetryPlane> detect_axis_symmetries(const FeatureField& field, const Mesh& mesh,
                                                  const VertexFeatures& features,
                                                  double epsilon = kDefaultSymmetryEpsilon);

// Side of the plane: +1, -1, or 0 within the on-plane tolerance.
std::int8_t plane_side(const SymmetryPlane& plane, const Vec3d& p, double tolerance);
double plane_tolerance(const Mesh& mesh);

// Handle sides relative to each vertex. Omega+ of vertex i holds handles on
// i's side plus handles lying on the plane; Omega- holds the rest.
struct HandlePartition {
  std::vector<std::int8_t> vertex_side;
  std::vector<std::int8_t> handle_side;

  bool in_omega_plus(std::size_t vertex, std::size_t handle) const {
    const auto hs = handle_side[handle];
    return hs == 0 || vertex_side[vertex] == 0 || hs == vertex_side[vertex];
  }
  std::vector<std::size_t> omega_plus(std::size_t vertex) const;
  std::vector<std::size_t> omega_minus(std::size_t vertex) const;
};

HandlePartition partition_handles(const SymmetryPlane& plane, const Mesh& mesh,
                                  std::span<const std::uint32_t> handle_vertices);

}  // namespace dfd
