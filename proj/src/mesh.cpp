#include "dfd/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace dfd {

void Mesh::validate() const {
  const auto n = vertices.size();
  for (const auto& f : faces)
    for (auto idx : f)
      if (idx >= n)
        throw InputError("face index out of range: " + std::to_string(idx) + " >= " +
                         std::to_string(n));
  if (!colors.empty() && colors.size() != n) throw InputError("vertex color count mismatch");
}

Bounds bounds_of(const Mesh& mesh) {
  Bounds b{Vec3f::Constant(std::numeric_limits<float>::max()),
           Vec3f::Constant(std::numeric_limits<float>::lowest())};
  for (const auto& v : mesh.vertices) {
    b.min = b.min.cwiseMin(v);
    b.max = b.max.cwiseMax(v);
  }
  if (mesh.vertices.empty()) b.min = b.max = Vec3f::Zero();
  return b;
}

BoundingSphere bounding_sphere_of(const Mesh& mesh) {
  const Vec3f c = bounds_of(mesh).center();
  float r2 = 0.f;
  for (const auto& v : mesh.vertices) r2 = std::max(r2, (v - c).squaredNorm());
  return {c, std::sqrt(r2)};
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string_view next_token(std::string_view& line) {
  std::size_t i = 0;
  while (i < line.size() && is_space(line[i])) ++i;
  std::size_t j = i;
  while (j < line.size() && !is_space(line[j])) ++j;
  auto tok = line.substr(i, j - i);
  line.remove_prefix(j);
  return tok;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc();
}

void fan_triangulate(const std::vector<std::uint32_t>& poly, std::vector<Face>& faces) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({poly[0], poly[k], poly[k + 1]});
}

}  // namespace

Mesh load_obj(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Mesh mesh;
  std::vector<std::uint32_t> poly;
  std::vector<std::array<std::uint8_t, 3>> colors;
  bool any_color = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    auto kind = next_token(line);
    if (kind == "v") {
      float xyz[6];
      int count = 0;
      for (; count < 6; ++count) {
        auto tok = next_token(line);
        if (tok.empty()) break;
        if (!parse_number(tok, xyz[count]))
          throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      }
      if (count < 3) throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      mesh.vertices.emplace_back(xyz[0], xyz[1], xyz[2]);
      if (count == 6) {
        any_color = true;
        auto to8 = [](float c) {
          return static_cast<std::uint8_t>(std::clamp(std::lround(c * 255.f), 0L, 255L));
        };
        colors.push_back({to8(xyz[3]), to8(xyz[4]), to8(xyz[5])});
      } else {
        colors.push_back({200, 200, 200});
      }
    } else if (kind == "f") {
      poly.clear();
      for (auto tok = next_token(line); !tok.empty(); tok = next_token(line)) {
        auto slash = tok.find('/');
        long idx = 0;
        if (!parse_number(tok.substr(0, slash), idx) || idx == 0)
          throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad face");
        long resolved = idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
        if (resolved < 0) throw InputError("face index out of range");
        poly.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (poly.size() < 3)
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      fan_triangulate(poly, mesh.faces);
    }
  }
  if (mesh.vertices.empty()) throw InputError(path.string() + ": mesh has zero vertices");
  if (any_color) mesh.colors = std::move(colors);
  mesh.validate();
  return mesh;
}

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw InputError("unknown PLY property type " + std::string(s));
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class PlyReader {
 public:
  PlyReader(const std::string& data, std::size_t pos, bool binary)
      : data_(data), pos_(pos), binary_(binary) {}

  double read(PlyType t) {
    if (!binary_) return read_ascii();
    const std::size_t sz = ply_size(t);
    if (pos_ + sz > data_.size()) throw InputError("PLY body truncated");
    const char* p = data_.data() + pos_;
    pos_ += sz;
    switch (t) {
      case PlyType::i8: return load<std::int8_t>(p);
      case PlyType::u8: return load<std::uint8_t>(p);
      case PlyType::i16: return load<std::int16_t>(p);
      case PlyType::u16: return load<std::uint16_t>(p);
      case PlyType::i32: return load<std::int32_t>(p);
      case PlyType::u32: return load<std::uint32_t>(p);
      case PlyType::f32: return load<float>(p);
      case PlyType::f64: return load<double>(p);
    }
    return 0;
  }

 private:
  template <typename T>
  static double load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  }

  double read_ascii() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    std::size_t end = pos_;
    while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
    double v = 0;
    if (end == pos_ || !parse_number(std::string_view(data_.data() + pos_, end - pos_), v))
      throw InputError("PLY ascii body malformed");
    pos_ = end;
    return v;
  }

  const std::string& data_;
  std::size_t pos_;
  bool binary_;
};

}  // namespace

Mesh load_ply(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  const auto header_end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos)
    throw InputError(path.string() + ": not a PLY file");
  std::istringstream header(data.substr(0, header_end));
  std::size_t body = data.find('\n', header_end);
  body = body == std::string::npos ? data.size() : body + 1;

  std::vector<PlyElement> elements;
  bool binary = false;
  std::string line;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt == "ascii") binary = false;
      else throw InputError(path.string() + ": unsupported PLY format " + fmt);
    } else if (kw == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw InputError("PLY property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = ply_type(ct);
        p.type = ply_type(it);
      } else {
        p.type = ply_type(t);
        ls >> p.name;
      }
      elements.back().props.push_back(p);
    }
  }

  Mesh mesh;
  PlyReader reader(data, body, binary);
  std::vector<std::uint32_t> poly;
  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    bool has_color = false;
    if (is_vertex) {
      mesh.vertices.reserve(e.count);
      for (const auto& p : e.props)
        if (p.name == "red") has_color = true;
      if (has_color) mesh.colors.reserve(e.count);
    }
    if (is_face) mesh.faces.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3f v = Vec3f::Zero();
      std::array<std::uint8_t, 3> c{200, 200, 200};
      for (const auto& p : e.props) {
        if (p.is_list) {
          const auto cnt = static_cast<std::size_t>(reader.read(p.count_type));
          poly.clear();
          for (std::size_t k = 0; k < cnt; ++k) {
            const double idx = reader.read(p.type);
            if (idx < 0) throw InputError("face index out of range");
            poly.push_back(static_cast<std::uint32_t>(idx));
          }
          if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            if (poly.size() < 3) throw InputError("PLY face with < 3 vertices");
            fan_triangulate(poly, mesh.faces);
          }
        } else {
          const double value = reader.read(p.type);
          if (!is_vertex) continue;
          if (p.name == "x") v.x() = static_cast<float>(value);
          else if (p.name == "y") v.y() = static_cast<float>(value);
          else if (p.name == "z") v.z() = static_cast<float>(value);
          else if (p.name == "red") c[0] = static_cast<std::uint8_t>(value);
          else if (p.name == "green") c[1] = static_cast<std::uint8_t>(value);
          else if (p.name == "blue") c[2] = static_cast<std::uint8_t>(value);
        }
      }
      if (is_vertex) {
        mesh.vertices.push_back(v);
        if (has_color) mesh.colors.push_back(c);
      }
    }
  }
  if (mesh.vertices.empty()) throw InputError(path.string() + ": mesh has zero vertices");
  mesh.validate();
  return mesh;
}

Mesh load_mesh(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".obj") return load_obj(path);
  if (ext == ".ply") return load_ply(path);
  throw InputError("unsupported mesh extension: " + path.string());
}

void save_obj(const std::filesystem::path& path, const std::vector<Vec3f>& vertices,
              const std::vector<Face>& faces) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(9);
  std::string buf;
  buf.reserve(1 << 20);
  char tmp[128];
  auto flush = [&] {
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    buf.clear();
  };
  for (const auto& v : vertices) {
    int len = std::snprintf(tmp, sizeof tmp, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    buf.append(tmp, static_cast<std::size_t>(len));
    if (buf.size() > (1 << 20) - 256) flush();
  }
  for (const auto& f : faces) {
    int len = std::snprintf(tmp, sizeof tmp, "f %u %u %u\n", f[0] + 1, f[1] + 1, f[2] + 1);
    buf.append(tmp, static_cast<std::size_t>(len));
    if (buf.size() > (1 << 20) - 256) flush();
  }
  flush();
  if (!out) throw InputError("write failed: " + path.string());
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
  save_obj(path, mesh.vertices, mesh.faces);
}

std::vector<std::array<std::uint32_t, 2>> unique_edges(const Mesh& mesh) {
  std::vector<std::array<std::uint32_t, 2>> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      auto a = f[k], b = f[(k + 1) % 3];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      edges.push_back({a, b});
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

EdgeGraph build_edge_graph(const Mesh& mesh) {
  const auto edges = unique_edges(mesh);
  const std::size_t n = mesh.vertices.size();
  EdgeGraph g;
  g.offsets.assign(n + 1, 0);
  for (const auto& e : edges) {
    ++g.offsets[e[0] + 1];
    ++g.offsets[e[1] + 1];
  }
  for (std::size_t i = 0; i < n; ++i) g.offsets[i + 1] += g.offsets[i];
  g.neighbors.resize(g.offsets[n]);
  g.lengths.resize(g.offsets[n]);
  std::vector<std::uint32_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& e : edges) {
    const float len = (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm();
    g.neighbors[cursor[e[0]]] = e[1];
    g.lengths[cursor[e[0]]++] = len;
    g.neighbors[cursor[e[1]]] = e[0];
    g.lengths[cursor[e[1]]++] = len;
  }
  return g;
}

GeodesicRow geodesics_from(const EdgeGraph& graph, std::uint32_t source) {
  const std::size_t n = graph.vertex_count();
  if (source >= n) throw InputError("geodesic source out of range");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    for (auto k = graph.offsets[v]; k < graph.offsets[v + 1]; ++k) {
      const auto u = graph.neighbors[k];
      const double nd = d + graph.lengths[k];
      if (nd < dist[u]) {
        dist[u] = nd;
        heap.emplace(nd, u);
      }
    }
  }
  double max_d = 0.0;
  for (double d : dist)
    if (d != inf) max_d = std::max(max_d, d);

  GeodesicRow row;
  row.source = source;
  row.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] == inf) row.distances[i] = 1.f;
    else if (max_d > 0) row.distances[i] = static_cast<float>(std::min(1.0, dist[i] / max_d));
    else row.distances[i] = i == source ? 0.f : 1.f;
  }
  row.distances[source] = 0.f;
  return row;
}

GeodesicRow geodesics_from(const Mesh& mesh, std::uint32_t source) {
  if (source >= mesh.vertices.size()) throw InputError("geodesic source out of range");
  return geodesics_from(build_edge_graph(mesh), source);
}

namespace shapes {

Mesh uv_sphere(std::size_t stacks, std::size_t slices, float radius) {
  stacks = std::max<std::size_t>(stacks, 2);
  slices = std::max<std::size_t>(slices, 3);
  Mesh m;
  m.vertices.emplace_back(0.f, radius, 0.f);
  for (std::size_t i = 1; i < stacks; ++i) {
    const double phi = std::numbers::pi * static_cast<double>(i) / static_cast<double>(stacks);
    for (std::size_t j = 0; j < slices; ++j) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(slices);
      m.vertices.emplace_back(static_cast<float>(radius * std::sin(phi) * std::cos(theta)),
                              static_cast<float>(radius * std::cos(phi)),
                              static_cast<float>(radius * std::sin(phi) * std::sin(theta)));
    }
  }
  const auto south = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0.f, -radius, 0.f);
  auto ring = [&](std::size_t i, std::size_t j) {
    return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices));
  };
  for (std::size_t j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j + 1), ring(1, j)});
  for (std::size_t i = 1; i + 1 < stacks; ++i)
    for (std::size_t j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  for (std::size_t j = 0; j < slices; ++j)
    m.faces.push_back({south, ring(stacks - 1, j), ring(stacks - 1, j + 1)});
  return m;
}

Mesh subdivide(const Mesh& mesh) {
  Mesh out;
  out.vertices = mesh.vertices;
  std::unordered_map<std::uint64_t, std::uint32_t> mid;
  mid.reserve(mesh.faces.size() * 2);
  auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
    const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(0.5f * (mesh.vertices[a] + mesh.vertices[b]));
    mid.emplace(key, idx);
    return idx;
  };
  out.faces.reserve(mesh.faces.size() * 4);
  for (const auto& f : mesh.faces) {
    const auto ab = midpoint(f[0], f[1]);
    const auto bc = midpoint(f[1], f[2]);
    const auto ca = midpoint(f[2], f[0]);
    out.faces.push_back({f[0], ab, ca});
    out.faces.push_back({ab, f[1], bc});
    out.faces.push_back({ca, bc, f[2]});
    out.faces.push_back({ab, bc, ca});
  }
  return out;
}

Mesh icosphere(int level, float radius) {
  const float t = (1.f + std::sqrt(5.f)) / 2.f;
  Mesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : m.vertices) v = v.normalized() * radius;
  for (int l = 0; l < level; ++l) {
    m = subdivide(m);
    for (auto& v : m.vertices) v = v.normalized() * radius;
  }
  return m;
}

Mesh grid(std::size_t cells_x, std::size_t cells_y, float size_x, float size_y) {
  Mesh m;
  for (std::size_t j = 0; j <= cells_y; ++j)
    for (std::size_t i = 0; i <= cells_x; ++i)
      m.vertices.emplace_back(size_x * static_cast<float>(i) / static_cast<float>(cells_x),
                              size_y * static_cast<float>(j) / static_cast<float>(cells_y), 0.f);
  auto idx = [&](std::size_t i, std::size_t j) {
    return static_cast<std::uint32_t>(j * (cells_x + 1) + i);
  };
  for (std::size_t j = 0; j < cells_y; ++j)
    for (std::size_t i = 0; i < cells_x; ++i) {
      m.faces.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
      m.faces.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
    }
  return m;
}

Mesh box(const Vec3f& lo, const Vec3f& hi) {
  Mesh m;
  for (int k = 0; k < 8; ++k)
    m.vertices.emplace_back(k & 1 ? hi.x() : lo.x(), k & 2 ? hi.y() : lo.y(), k & 4 ? hi.z() : lo.z());
  m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

Mesh merge(const std::vector<Mesh>& parts) {
  Mesh out;
  for (const auto& p : parts) {
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& f : p.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  return out;
}

Mesh sphere_with_faces(std::size_t target_faces, float radius) {
  // 2*s*(s*2) - 2*(2s) faces for stacks=s, slices=2s.
  const auto s = static_cast<std::size_t>(std::max(2.0, std::round(std::sqrt(target_faces / 4.0))));
  return uv_sphere(s, 2 * s, radius);
}

}  // namespace shapes

}  // namespace dfd
