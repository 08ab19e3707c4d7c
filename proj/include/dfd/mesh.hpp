#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfd/common.hpp"

namespace dfd {

using Face = std::array<std::uint32_t, 3>;

// Indexed triangle soup. No manifoldness is assumed anywhere in the library:
// boundary edges, non-manifold edges and disconnected pieces are all fine.
struct Mesh {
  std::vector<Vec3f> vertices;
  std::vector<Face> faces;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty, or one per vertex

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  // Throws InputError if any face references a missing vertex.
  void validate() const;
};

struct Bounds {
  Vec3f min;
  Vec3f max;

  Vec3f center() const { return 0.5f * (min + max); }
  float diagonal() const { return (max - min).norm(); }
  float max_half_extent() const { return 0.5f * (max - min).maxCoeff(); }
};

Bounds bounds_of(const Mesh& mesh);

// Center = bounding-box center, radius = farthest vertex from it.
struct BoundingSphere {
  Vec3f center;
  float radius;
};
BoundingSphere bounding_sphere_of(const Mesh& mesh);

// OBJ (v/f records; polygons fan-triangulated) or PLY (binary little-endian
// or ascii), chosen by extension.
Mesh load_mesh(const std::filesystem::path& path);
Mesh load_obj(const std::filesystem::path& path);
Mesh load_ply(const std::filesystem::path& path);

// Positions and faces only, 9 significant digits.
void save_obj(const std::filesystem::path& path, const Mesh& mesh);
void save_obj(const std::filesystem::path& path, const std::vector<Vec3f>& vertices,
              const std::vector<Face>& faces);

// Quadric-error edge collapse down to at most target_faces (best effort).
// Meshes already at or below the target come back unchanged.
Mesh decimate_qem(const Mesh& mesh, std::size_t target_faces);

// Undirected edge graph in CSR form with Euclidean edge lengths.
struct EdgeGraph {
  std::vector<std::uint32_t> offsets;  // size n+1
  std::vector<std::uint32_t> neighbors;
  std::vector<float> lengths;

  std::size_t vertex_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};
EdgeGraph build_edge_graph(const Mesh& mesh);

// Unique undirected edges (a < b).
std::vector<std::array<std::uint32_t, 2>> unique_edges(const Mesh& mesh);

struct GeodesicRow {
  std::uint32_t source = 0;
  std::vector<float> distances;  // in [0,1]; unreachable vertices are 1
};

// Dijkstra over the edge graph, normalized so the farthest reachable
// vertex sits at 1.
GeodesicRow geodesics_from(const EdgeGraph& graph, std::uint32_t source);
GeodesicRow geodesics_from(const Mesh& mesh, std::uint32_t source);

// Procedural shapes used by the benchmark harness and the test suites.
namespace shapes {

// Latitude/longitude sphere with 2*stacks*slices - 2*slices faces.
Mesh uv_sphere(std::size_t stacks, std::size_t slices, float radius = 1.f);
// Subdivided icosahedron: 20 * 4^level faces.
Mesh icosphere(int level, float radius = 1.f);
// Flat quad [0,1]^2 at z=0 split into 2*cells^2 triangles.
Mesh grid(std::size_t cells_x, std::size_t cells_y, float size_x = 1.f, float size_y = 1.f);
// Axis-aligned box made of 12 triangles.
Mesh box(const Vec3f& min, const Vec3f& max);
// Concatenate meshes, offsetting indices.
Mesh merge(const std::vector<Mesh>& parts);
// 1-to-4 midpoint subdivision (shared edge midpoints are welded).
Mesh subdivide(const Mesh& mesh);
// Sphere variant with roughly target_faces faces.
Mesh sphere_with_faces(std::size_t target_faces, float radius = 1.f);

}  // namespace shapes

}  // namespace dfd
