#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "dfd/mesh.hpp"

namespace dfd {

// Pinhole camera, +Y up by default, vertical field of view in degrees.
struct Camera {
  Vec3d position{0, 0, 1};
  Vec3d target{0, 0, 0};
  Vec3d up{0, 1, 0};
  double fov_deg = 45.0;
  std::uint32_t width = 512;
  std::uint32_t height = 512;
  double near_plane = 0.01;
  double far_plane = 100.0;

  void validate() const;

  // Orthonormal view frame: right, up, forward (forward points at target).
  struct Frame {
    Vec3d right, up, forward;
  };
  Frame frame() const;

  // Camera-space coordinates (x right, y up, z = depth along forward).
  Vec3d to_camera(const Vec3d& p) const;
  // Continuous pixel coordinates of a camera-space point with z > 0.
  // Pixel (x, y) covers [x, x+1) x [y, y+1); row 0 is the top of the image.
  Eigen::Vector2d to_pixel(const Vec3d& cam) const;
  // World-space unit direction of the ray through continuous pixel coords.
  Vec3d ray_direction(double px, double py) const;
};

struct CameraRig {
  double radius_factor = 4.0;  // camera distance in bounding-sphere radii
  double fov_deg = 45.0;
  std::uint32_t resolution = 512;
};

// n cameras on a Fibonacci spiral around the mesh bounding sphere, all
// looking at its center.
std::vector<Camera> fibonacci_cameras(std::size_t n, const Mesh& mesh, const CameraRig& rig = {});

inline constexpr std::uint32_t kNoFace = std::numeric_limits<std::uint32_t>::max();

// Per-pixel visibility buffer for one view.
struct RasterMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint32_t> face;              // kNoFace where uncovered
  std::vector<std::array<float, 3>> bary;       // perspective-correct barycentrics
  std::vector<float> depth;                     // camera-space depth

  std::size_t index(std::uint32_t x, std::uint32_t y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool covered(std::uint32_t x, std::uint32_t y) const { return face[index(x, y)] != kNoFace; }
  std::size_t coverage() const;
};

// Z-buffered rasterization with pixel-center sampling. No face culling;
// zero-area triangles cover nothing; equal depths go to the lower face id.
RasterMap rasterize(const Mesh& mesh, const Camera& camera);

// One supervised pixel: the 3D point under the pixel center.
struct RenderSample {
  Vec3f point;
  std::uint32_t view = 0;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t face = 0;
  std::array<float, 3> bary{};
};

// P = B * T for every covered pixel, in row-major pixel order.
std::vector<RenderSample> surface_points(const RasterMap& raster, const Mesh& mesh,
                                         std::uint32_t view = 0);

// 8-bit RGB image, flat shaded with a fixed three-light rig. Only meant as
// input for an external feature extractor.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;
};
Image shade(const RasterMap& raster, const Mesh& mesh, const Camera& camera);
void write_png(const std::filesystem::path& path, const Image& image);

// Camera manifest (JSON) read/write.
void save_camera_manifest(const std::filesystem::path& path, const std::vector<Camera>& cameras);
std::vector<Camera> load_camera_manifest(const std::filesystem::path& path);

// Rebuilds a raster (face + barycentrics only, depth 0) from stored samples.
RasterMap raster_from_samples(const std::vector<RenderSample>& samples, std::uint32_t view,
                              std::uint32_t width, std::uint32_t height);

}  // namespace dfd
