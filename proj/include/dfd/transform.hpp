#pragma once

#include <array>
#include <span>

#include "dfd/common.hpp"

namespace dfd {

// x -> linear * x + translation, in the global frame about the origin.
struct AffineTransform {
  Mat3d linear = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  static AffineTransform identity() { return {}; }
  static AffineTransform translate(const Vec3d& t) { return {Mat3d::Identity(), t}; }

  // 3x4 row-major [linear | translation].
  static AffineTransform from_rows(std::span<const double> m12) {
    if (m12.size() != 12) throw InputError("affine matrix needs 12 values (3x4 row-major)");
    AffineTransform a;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a.linear(r, c) = m12[static_cast<std::size_t>(4 * r + c)];
      a.translation[r] = m12[static_cast<std::size_t>(4 * r + 3)];
    }
    if (!a.linear.allFinite() || !a.translation.allFinite()) throw InputError("affine matrix is not finite");
    return a;
  }
  std::array<double, 12> to_rows() const {
    std::array<double, 12> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(4 * r + c)] = linear(r, c);
      m[static_cast<std::size_t>(4 * r + 3)] = translation[r];
    }
    return m;
  }

  Vec3d apply(const Vec3d& p) const { return linear * p + translation; }

  // this after other.
  AffineTransform compose(const AffineTransform& other) const {
    return {linear * other.linear, linear * other.translation + translation};
  }

  // Rotation/scale `linear` about `pivot`, as a global transform.
  static AffineTransform about(const Mat3d& linear, const Vec3d& pivot) {
    return {linear, pivot - linear * pivot};
  }
};

}  // namespace dfd
