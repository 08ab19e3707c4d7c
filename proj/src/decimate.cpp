#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/Dense>

#include "dfd/mesh.hpp"

namespace dfd {

namespace {

// Symmetric 4x4 quadric stored as its upper triangle.
struct Quadric {
  double a00 = 0, a01 = 0, a02 = 0, a03 = 0, a11 = 0, a12 = 0, a13 = 0, a22 = 0, a23 = 0, a33 = 0;

  static Quadric plane(const Vec3d& n, double d, double w) {
    Quadric q;
    q.a00 = w * n.x() * n.x();
    q.a01 = w * n.x() * n.y();
    q.a02 = w * n.x() * n.z();
    q.a03 = w * n.x() * d;
    q.a11 = w * n.y() * n.y();
    q.a12 = w * n.y() * n.z();
    q.a13 = w * n.y() * d;
    q.a22 = w * n.z() * n.z();
    q.a23 = w * n.z() * d;
    q.a33 = w * d * d;
    return q;
  }

  Quadric& operator+=(const Quadric& o) {
    a00 += o.a00; a01 += o.a01; a02 += o.a02; a03 += o.a03; a11 += o.a11;
    a12 += o.a12; a13 += o.a13; a22 += o.a22; a23 += o.a23; a33 += o.a33;
    return *this;
  }

  double error(const Vec3d& v) const {
    const double x = v.x(), y = v.y(), z = v.z();
    return a00 * x * x + 2 * a01 * x * y + 2 * a02 * x * z + 2 * a03 * x + a11 * y * y +
           2 * a12 * y * z + 2 * a13 * y + a22 * z * z + 2 * a23 * z + a33;
  }

  // Minimizer of the quadric if the 3x3 block is well conditioned.
  bool optimum(Vec3d& out) const {
    Mat3d A;
    A << a00, a01, a02, a01, a11, a12, a02, a12, a22;
    const double scale = A.trace() / 3.0;
    const double det = A.determinant();
    if (!(scale > 0) || std::abs(det) < 1e-10 * scale * scale * scale) return false;
    out = A.inverse() * Vec3d(-a03, -a13, -a23);
    return out.allFinite();
  }
};

constexpr double kBoundaryWeight = 1000.0;
constexpr double kFlipCosine = 0.2;

struct Candidate {
  double cost;
  std::uint32_t a, b;
  std::uint32_t version_a, version_b;

  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (a != o.a) return a > o.a;
    return b > o.b;
  }
};

class Decimator {
 public:
  explicit Decimator(const Mesh& mesh) : faces_(mesh.faces) {
    const std::size_t n = mesh.vertices.size();
    pos_.resize(n);
    for (std::size_t i = 0; i < n; ++i) pos_[i] = mesh.vertices[i].cast<double>();
    quadric_.assign(n, Quadric{});
    incident_.assign(n, {});
    alive_.assign(n, 1);
    version_.assign(n, 0);
    face_alive_.assign(faces_.size(), 1);
    live_faces_ = faces_.size();

    for (std::uint32_t f = 0; f < faces_.size(); ++f) {
      const auto& t = faces_[f];
      for (int k = 0; k < 3; ++k) incident_[t[k]].push_back(f);
      Vec3d n3 = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
      const double len = n3.norm();
      if (len <= 0) continue;
      n3 /= len;
      const auto q = Quadric::plane(n3, -n3.dot(pos_[t[0]]), 0.5 * len);
      for (int k = 0; k < 3; ++k) quadric_[t[k]] += q;
    }
    for (auto& inc : incident_) {
      std::sort(inc.begin(), inc.end());
      inc.erase(std::unique(inc.begin(), inc.end()), inc.end());
    }
    add_boundary_penalties();
  }

  Mesh run(std::size_t target) {
    for (std::uint32_t v = 0; v < pos_.size(); ++v) push_edges(v, true);
    while (live_faces_ > target && !heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (!alive_[c.a] || !alive_[c.b]) continue;
      if (version_[c.a] != c.version_a || version_[c.b] != c.version_b) continue;
      collapse(c.a, c.b);
    }
    return compact();
  }

 private:
  void add_boundary_penalties() {
    // Count how many faces use each undirected edge; single-use edges are boundary.
    std::vector<std::array<std::uint32_t, 3>> half;  // a, b, face
    half.reserve(faces_.size() * 3);
    for (std::uint32_t f = 0; f < faces_.size(); ++f)
      for (int k = 0; k < 3; ++k) {
        auto a = faces_[f][k], b = faces_[f][(k + 1) % 3];
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        half.push_back({a, b, f});
      }
    std::sort(half.begin(), half.end());
    for (std::size_t i = 0; i < half.size();) {
      std::size_t j = i;
      while (j < half.size() && half[j][0] == half[i][0] && half[j][1] == half[i][1]) ++j;
      if (j - i == 1) {
        const auto& t = faces_[half[i][2]];
        const auto a = half[i][0], b = half[i][1];
        const Vec3d fn = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
        const Vec3d e = pos_[b] - pos_[a];
        Vec3d pn = e.cross(fn);
        const double len = pn.norm();
        if (len > 0) {
          pn /= len;
          const auto q = Quadric::plane(pn, -pn.dot(pos_[a]), kBoundaryWeight * e.squaredNorm());
          quadric_[a] += q;
          quadric_[b] += q;
        }
      }
      i = j;
    }
  }

  void neighbors_of(std::uint32_t v, std::vector<std::uint32_t>& out) const {
    out.clear();
    for (auto f : incident_[v]) {
      if (!face_alive_[f]) continue;
      for (auto u : faces_[f])
        if (u != v) out.push_back(u);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

  Vec3d placement(std::uint32_t a, std::uint32_t b, const Quadric& q) const {
    Vec3d opt;
    if (q.optimum(opt)) {
      // Reject optima far from the edge; they come from nearly flat regions.
      const double reach = 2.0 * (pos_[a] - pos_[b]).norm();
      const Vec3d mid = 0.5 * (pos_[a] + pos_[b]);
      if ((opt - mid).norm() <= reach + 1e-12) return opt;
    }
    const Vec3d mid = 0.5 * (pos_[a] + pos_[b]);
    const double ea = q.error(pos_[a]), eb = q.error(pos_[b]), em = q.error(mid);
    if (ea <= eb && ea <= em) return pos_[a];
    if (eb <= em) return pos_[b];
    return mid;
  }

  void push_edges(std::uint32_t v, bool only_greater) {
    neighbors_of(v, scratch_a_);
    for (auto u : scratch_a_) {
      if (only_greater && u < v) continue;
      Quadric q = quadric_[v];
      q += quadric_[u];
      const Vec3d p = placement(v, u, q);
      const auto a = std::min(v, u), b = std::max(v, u);
      heap_.push({std::max(0.0, q.error(p)), a, b, version_[a], version_[b]});
    }
  }

  bool flips(std::uint32_t moved, std::uint32_t other, const Vec3d& target) const {
    for (auto f : incident_[moved]) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      if (t[0] == other || t[1] == other || t[2] == other) continue;
      Vec3d p[3], q[3];
      for (int k = 0; k < 3; ++k) {
        p[k] = pos_[t[k]];
        q[k] = t[k] == moved ? target : p[k];
      }
      const Vec3d n0 = (p[1] - p[0]).cross(p[2] - p[0]);
      const Vec3d n1 = (q[1] - q[0]).cross(q[2] - q[0]);
      const double l0 = n0.norm(), l1 = n1.norm();
      if (l0 <= 0) continue;
      if (l1 <= 1e-12 * l0) return true;
      if (n0.dot(n1) < kFlipCosine * l0 * l1) return true;
    }
    return false;
  }

  void collapse(std::uint32_t a, std::uint32_t b) {
    // Link condition: common neighbors must be exactly the apexes of the
    // faces that contain the edge, otherwise the collapse pinches topology.
    neighbors_of(a, scratch_a_);
    neighbors_of(b, scratch_b_);
    common_.clear();
    std::set_intersection(scratch_a_.begin(), scratch_a_.end(), scratch_b_.begin(),
                          scratch_b_.end(), std::back_inserter(common_));
    apex_.clear();
    for (auto f : incident_[a]) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      if (t[0] != b && t[1] != b && t[2] != b) continue;
      for (auto u : t)
        if (u != a && u != b) apex_.push_back(u);
    }
    std::sort(apex_.begin(), apex_.end());
    apex_.erase(std::unique(apex_.begin(), apex_.end()), apex_.end());
    if (common_ != apex_) return;

    Quadric q = quadric_[a];
    q += quadric_[b];
    const Vec3d target = placement(a, b, q);
    if (flips(a, b, target) || flips(b, a, target)) return;

    for (auto f : incident_[a]) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      if (t[0] == b || t[1] == b || t[2] == b) {
        face_alive_[f] = 0;
        --live_faces_;
      }
    }
    std::vector<std::uint32_t> merged;
    merged.reserve(incident_[a].size() + incident_[b].size());
    for (auto f : incident_[a])
      if (face_alive_[f]) merged.push_back(f);
    for (auto f : incident_[b]) {
      if (!face_alive_[f]) continue;
      for (auto& u : faces_[f])
        if (u == b) u = a;
      merged.push_back(f);
    }
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    incident_[a] = std::move(merged);
    incident_[b].clear();
    incident_[b].shrink_to_fit();
    alive_[b] = 0;
    pos_[a] = target;
    quadric_[a] = q;
    ++version_[a];
    ++version_[b];
    // Neighbors' edge costs to a changed; their versions stay, so bump them
    // by re-pushing every edge around a.
    push_edges(a, false);
  }

  Mesh compact() const {
    Mesh out;
    std::vector<std::uint32_t> remap(pos_.size(), UINT32_MAX);
    for (std::uint32_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      Face nf;
      for (int k = 0; k < 3; ++k) {
        auto& r = remap[faces_[f][k]];
        if (r == UINT32_MAX) {
          r = static_cast<std::uint32_t>(out.vertices.size());
          out.vertices.push_back(pos_[faces_[f][k]].cast<float>());
        }
        nf[k] = r;
      }
      out.faces.push_back(nf);
    }
    return out;
  }

  std::vector<Face> faces_;
  std::vector<Vec3d> pos_;
  std::vector<Quadric> quadric_;
  std::vector<std::vector<std::uint32_t>> incident_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::uint32_t> version_;
  std::vector<std::uint8_t> face_alive_;
  std::size_t live_faces_ = 0;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
  std::vector<std::uint32_t> scratch_a_, scratch_b_, common_, apex_;
};

}  // namespace

Mesh decimate_qem(const Mesh& mesh, std::size_t target_faces) {
  if (target_faces < 4) throw InputError("decimation target must be at least 4 faces");
  if (mesh.faces.size() <= target_faces) return mesh;
  mesh.validate();
  return Decimator(mesh).run(target_faces);
}

}  // namespace dfd
