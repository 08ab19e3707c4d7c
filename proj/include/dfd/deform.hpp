#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfd/symmetry.hpp"
#include "dfd/transform.hpp"
#include "dfd/weights.hpp"

namespace dfd {

struct Handle {
  std::uint32_t vertex = 0;
  AffineTransform transform;
};

struct HandleSet {
  std::vector<Handle> handles;
  AffineTransform default_transform;     // D0, used only by the pou mode
  std::optional<SymmetryPlane> plane;

  std::vector<std::uint32_t> vertices() const;
  std::size_t size() const { return handles.size(); }
};

// literal:      V'_i = sum_k W_ki D_k V_i
// displacement: V'_i = V_i + sum_k W_ki (D_k V_i - V_i)   (identity-preserving; default)
// pou:          V'_i = (max(1 - sum_k W_ki, 0) D0 + sum_k W_ki D_k) V_i
enum class BlendMode { literal, displacement, pou };

BlendMode parse_blend_mode(const std::string& name);
std::string to_string(BlendMode mode);

// O(nK), parallel over vertex chunks, float64 accumulation.
std::vector<Vec3f> pose(std::span<const Vec3f> rest, const WeightMatrix& weights, const HandleSet& handles,
                        BlendMode mode = BlendMode::displacement);
inline std::vector<Vec3f> pose(const Mesh& mesh, const WeightMatrix& weights, const HandleSet& handles,
                               BlendMode mode = BlendMode::displacement) {
  return pose(std::span<const Vec3f>(mesh.vertices), weights, handles, mode);
}

// Same, with one weight row pointer per handle (each n floats), for
// callers that share rows between frames instead of holding a WeightMatrix.
std::vector<Vec3f> pose_rows(std::span<const Vec3f> rest, std::span<const float* const> rows,
                             const HandleSet& handles, BlendMode mode = BlendMode::displacement);
// Writes 3n packed floats to `out`, e.g. straight into a wire buffer.
void pose_rows_to(std::span<const Vec3f> rest, std::span<const float* const> rows, const HandleSet& handles,
                  BlendMode mode, float* out);

// Mirrored posing: each handle acts with D_k on vertices on its side of the
// plane and with R D_k R on the far side. Pairs where the handle or the
// vertex lies on the plane take the average of both, which keeps the result
// continuous as a handle crosses over. Throws unless the plane is accepted
// or `force` is set.
std::vector<Vec3f> pose_symmetric(const Mesh& mesh, const WeightMatrix& weights, const HandleSet& handles,
                                  const SymmetryPlane& plane, BlendMode mode = BlendMode::displacement,
                                  bool force = false);

std::vector<Vec3f> pose_symmetric_rows(const Mesh& mesh, std::span<const float* const> rows,
                                       const HandleSet& handles, const SymmetryPlane& plane,
                                       BlendMode mode = BlendMode::displacement, bool force = false);
void pose_symmetric_rows_to(const Mesh& mesh, std::span<const float* const> rows, const HandleSet& handles,
                            const SymmetryPlane& plane, BlendMode mode, bool force, float* out);

// JSON handle list: [{"vertex": j, "matrix": [12 floats, 3x4 row-major]}, ...].
HandleSet parse_handles_json(const std::string& text);
HandleSet load_handles(const std::filesystem::path& path);
std::string handles_to_json(const HandleSet& handles);

}  // namespace dfd
