#include "dfd/symmetry.hpp"

#include <cmath>

namespace dfd {

Vec3d reflect_point(const SymmetryPlane& plane, const Vec3d& p) {
  return p - 2.0 * plane.signed_distance(p) * plane.normal;
}

AffineTransform reflect_transform(const SymmetryPlane& plane, const AffineTransform& d) {
  // R(x) = H x + 2 d n with H = I - 2 n n^T, so R D R(x) = H A H x + H A (2 d n) + H t + 2 d n.
  const Vec3d& n = plane.normal;
  const Mat3d H = Mat3d::Identity() - 2.0 * n * n.transpose();
  const Vec3d shift = 2.0 * plane.offset * n;
  AffineTransform r;
  r.linear = H * d.linear * H;
  r.translation = H * (d.linear * shift + d.translation) + shift;
  return r;
}

double plane_tolerance(const Mesh& mesh) {
  return 1e-9 * static_cast<double>(bounds_of(mesh).diagonal());
}

std::int8_t plane_side(const SymmetryPlane& plane, const Vec3d& p, double tolerance) {
  const double s = plane.signed_distance(p);
  if (std::abs(s) <= tolerance) return 0;
  return s > 0 ? 1 : -1;
}

SymmetryPlane evaluate_plane(const FeatureField& field, const Mesh& mesh, const VertexFeatures& features,
                             const SymmetryPlane& plane, double epsilon) {
  if (mesh.vertices.empty()) throw InputError("cannot score a symmetry plane on an empty mesh");
  if (features.count != mesh.vertices.size()) throw InputError("vertex features do not match the mesh");
  const double tol = plane_tolerance(mesh);
  SymmetryPlane out = plane;
  out.normal = plane.normal.normalized();
  out.offset = plane.offset / plane.normal.norm();

  std::vector<Vec3f> reflected(mesh.vertices.size());
  for (std::size_t i = 0; i < reflected.size(); ++i)
    reflected[i] = reflect_point(out, mesh.vertices[i].cast<double>()).cast<float>();
  const auto zr = field.eval(reflected);

  double sum = 0.0;
  const std::size_t C = features.channels;
  for (std::size_t i = 0; i < reflected.size(); ++i) {
    if (plane_side(out, mesh.vertices[i].cast<double>(), tol) == 0) continue;
    const float* a = features.row(i);
    const float* b = zr.data() + i * C;
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(a[c]) - b[c];
      s += d * d;
    }
    sum += std::sqrt(s);
  }
  out.score = sum / static_cast<double>(mesh.vertices.size());
  out.accepted = out.score < epsilon;
  return out;
}

SymmetryPlane evaluate_plane(const FeatureField& field, const Mesh& mesh, const SymmetryPlane& plane,
                             double epsilon) {
  return evaluate_plane(field, mesh, compute_vertex_features(field, mesh.vertices), plane, epsilon);
}

std::vector<SymmetryPlane> detect_axis_symmetries(const FeatureField& field, const Mesh& mesh,
                                                  const VertexFeatures& features, double epsilon) {
  const Vec3d center = bounds_of(mesh).center().cast<double>();
  std::vector<SymmetryPlane> planes;
  for (int axis = 0; axis < 3; ++axis)
    planes.push_back(evaluate_plane(field, mesh, features,
                                    SymmetryPlane::through(Vec3d::Unit(axis), center), epsilon));
  return planes;
}

std::vector<SymmetryPlane> detect_axis_symmetries(const FeatureField& field, const Mesh& mesh, double epsilon) {
  return detect_axis_symmetries(field, mesh, compute_vertex_features(field, mesh.vertices), epsilon);
}

std::vector<std::size_t> HandlePartition::omega_plus(std::size_t vertex) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < handle_side.size(); ++k)
    if (in_omega_plus(vertex, k)) out.push_back(k);
  return out;
}

std::vector<std::size_t> HandlePartition::omega_minus(std::size_t vertex) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < handle_side.size(); ++k)
    if (!in_omega_plus(vertex, k)) out.push_back(k);
  return out;
}

HandlePartition partition_handles(const SymmetryPlane& plane, const Mesh& mesh,
                                  std::span<const std::uint32_t> handle_vertices) {
  const double tol = plane_tolerance(mesh);
  HandlePartition p;
  p.vertex_side.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    p.vertex_side[i] = plane_side(plane, mesh.vertices[i].cast<double>(), tol);
  for (auto h : handle_vertices) {
    if (h >= mesh.vertices.size()) throw InputError("handle index " + std::to_string(h) + " out of range");
    p.handle_side.push_back(p.vertex_side[h]);
  }
  return p;
}

}  // namespace dfd
