#include "dfd/deform.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dfd {

static_assert(sizeof(Vec3f) == 3 * sizeof(float), "Vec3f must be three packed floats");

std::vector<std::uint32_t> HandleSet::vertices() const {
  std::vector<std::uint32_t> v;
  v.reserve(handles.size());
  for (const auto& h : handles) v.push_back(h.vertex);
  return v;
}

BlendMode parse_blend_mode(const std::string& name) {
  if (name == "literal") return BlendMode::literal;
  if (name == "displacement") return BlendMode::displacement;
  if (name == "pou") return BlendMode::pou;
  throw InputError("unknown blend mode '" + name + "' (literal|displacement|pou)");
}

std::string to_string(BlendMode mode) {
  switch (mode) {
    case BlendMode::literal: return "literal";
    case BlendMode::displacement: return "displacement";
    case BlendMode::pou: return "pou";
  }
  return "?";
}

namespace {

constexpr std::size_t kChunk = 2048;

// Row-major 3x4, with the identity subtracted in displacement mode so the
// kernel is a plain weighted sum in every mode.
using Coeffs = std::array<double, 12>;

Coeffs coeffs_for(const AffineTransform& d, BlendMode mode) {
  Coeffs c{};
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c[4 * r + k] = d.linear(r, k) - (mode == BlendMode::displacement && r == k ? 1.0 : 0.0);
    c[4 * r + 3] = d.translation[r];
  }
  return c;
}

void check_weights(std::size_t n, const WeightMatrix& weights, const HandleSet& handles) {
  if (weights.vertex_count != n) throw InputError("weights were bound for a different vertex count");
  if (weights.handles.size() != handles.size() || weights.rows.size() != handles.size())
    throw InputError("weights bound for different handles");
  for (std::size_t k = 0; k < handles.size(); ++k) {
    if (weights.handles[k] != handles.handles[k].vertex) throw InputError("weights bound for different handles");
    if (weights.rows[k].size() != n) throw InputError("weight row length mismatch");
  }
}

struct ChunkState {
  alignas(64) double x[kChunk], y[kChunk], z[kChunk];
  alignas(64) double ax[kChunk], ay[kChunk], az[kChunk], wsum[kChunk];

  void load(std::span<const Vec3f> rest, std::size_t b, std::size_t m) {
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = rest[b + i].x();
      y[i] = rest[b + i].y();
      z[i] = rest[b + i].z();
    }
    std::fill_n(ax, m, 0.0);
    std::fill_n(ay, m, 0.0);
    std::fill_n(az, m, 0.0);
    std::fill_n(wsum, m, 0.0);
  }

  void accumulate(const Coeffs& c, const float* w, std::size_t m) {
    const double a00 = c[0], a01 = c[1], a02 = c[2], t0 = c[3];
    const double a10 = c[4], a11 = c[5], a12 = c[6], t1 = c[7];
    const double a20 = c[8], a21 = c[9], a22 = c[10], t2 = c[11];
    for (std::size_t i = 0; i < m; ++i) {
      const double wi = w[i];
      const double px = x[i], py = y[i], pz = z[i];
      ax[i] += wi * (a00 * px + a01 * py + a02 * pz + t0);
      ay[i] += wi * (a10 * px + a11 * py + a12 * pz + t1);
      az[i] += wi * (a20 * px + a21 * py + a22 * pz + t2);
      wsum[i] += wi;
    }
  }

  // Four handles per pass: the accumulators are read and written once
  // instead of four times. Same per-vertex summation order as four
  // single passes.
  void accumulate4(const Coeffs* c, const float* const* w, std::size_t m) {
    for (std::size_t i = 0; i < m; ++i) {
      const double px = x[i], py = y[i], pz = z[i];
      double sx = ax[i], sy = ay[i], sz = az[i], sw = wsum[i];
      for (int k = 0; k < 4; ++k) {
        const Coeffs& a = c[k];
        const double wi = w[k][i];
        sx += wi * (a[0] * px + a[1] * py + a[2] * pz + a[3]);
        sy += wi * (a[4] * px + a[5] * py + a[6] * pz + a[7]);
        sz += wi * (a[8] * px + a[9] * py + a[10] * pz + a[11]);
        sw += wi;
      }
      ax[i] = sx;
      ay[i] = sy;
      az[i] = sz;
      wsum[i] = sw;
    }
  }

  void store(float* out, std::size_t b, std::size_t m, BlendMode mode, const Coeffs& d0) {
    for (std::size_t i = 0; i < m; ++i) {
      double ox = ax[i], oy = ay[i], oz = az[i];
      if (mode == BlendMode::displacement) {
        ox += x[i];
        oy += y[i];
        oz += z[i];
      } else if (mode == BlendMode::pou) {
        const double r = std::max(1.0 - wsum[i], 0.0);
        ox += r * (d0[0] * x[i] + d0[1] * y[i] + d0[2] * z[i] + d0[3]);
        oy += r * (d0[4] * x[i] + d0[5] * y[i] + d0[6] * z[i] + d0[7]);
        oz += r * (d0[8] * x[i] + d0[9] * y[i] + d0[10] * z[i] + d0[11]);
      }
      float* o = out + 3 * (b + i);
      o[0] = static_cast<float>(ox);
      o[1] = static_cast<float>(oy);
      o[2] = static_cast<float>(oz);
    }
  }
};

std::vector<const float*> row_pointers(const WeightMatrix& weights) {
  std::vector<const float*> rows;
  for (const auto& r : weights.rows) rows.push_back(r.data());
  return rows;
}

}  // namespace

std::vector<Vec3f> pose(std::span<const Vec3f> rest, const WeightMatrix& weights, const HandleSet& handles,
                        BlendMode mode) {
  check_weights(rest.size(), weights, handles);
  return pose_rows(rest, row_pointers(weights), handles, mode);
}

std::vector<Vec3f> pose_symmetric(const Mesh& mesh, const WeightMatrix& weights, const HandleSet& handles,
                                  const SymmetryPlane& plane, BlendMode mode, bool force) {
  check_weights(mesh.vertices.size(), weights, handles);
  return pose_symmetric_rows(mesh, row_pointers(weights), handles, plane, mode, force);
}

std::vector<Vec3f> pose_rows(std::span<const Vec3f> rest, std::span<const float* const> rows,
                             const HandleSet& handles, BlendMode mode) {
  std::vector<Vec3f> out(rest.size());
  pose_rows_to(rest, rows, handles, mode, reinterpret_cast<float*>(out.data()));
  return out;
}

void pose_rows_to(std::span<const Vec3f> rest, std::span<const float* const> rows, const HandleSet& handles,
                  BlendMode mode, float* out) {
  if (rows.size() != handles.size()) throw InputError("weights bound for different handles");
  std::vector<Coeffs> coeffs;
  for (const auto& h : handles.handles) coeffs.push_back(coeffs_for(h.transform, mode));
  const Coeffs d0 = coeffs_for(handles.default_transform, BlendMode::literal);

  const std::size_t chunks = (rest.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, 1, [&](std::size_t cb, std::size_t ce) {
    auto state = std::make_unique<ChunkState>();
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * kChunk, m = std::min(kChunk, rest.size() - b);
      state->load(rest, b, m);
      std::size_t k = 0;
      for (; k + 4 <= coeffs.size(); k += 4) {
        const float* w[4] = {rows[k] + b, rows[k + 1] + b, rows[k + 2] + b, rows[k + 3] + b};
        state->accumulate4(&coeffs[k], w, m);
      }
      for (; k < coeffs.size(); ++k) state->accumulate(coeffs[k], rows[k] + b, m);
      state->store(out, b, m, mode, d0);
    }
  });
  ++counters().poses;
}

std::vector<Vec3f> pose_symmetric_rows(const Mesh& mesh, std::span<const float* const> rows,
                                       const HandleSet& handles, const SymmetryPlane& plane, BlendMode mode,
                                       bool force) {
  std::vector<Vec3f> out(mesh.vertices.size());
  pose_symmetric_rows_to(mesh, rows, handles, plane, mode, force, reinterpret_cast<float*>(out.data()));
  return out;
}

void pose_symmetric_rows_to(const Mesh& mesh, std::span<const float* const> rows, const HandleSet& handles,
                            const SymmetryPlane& plane, BlendMode mode, bool force, float* out) {
  if (!plane.accepted && !force) throw InputError("symmetry plane was not accepted (score " +
                                                  std::to_string(plane.score) + "); pass force to use it anyway");
  const std::span<const Vec3f> rest(mesh.vertices);
  if (rows.size() != handles.size()) throw InputError("weights bound for different handles");
  const auto part = partition_handles(plane, mesh, handles.vertices());

  // Per handle: [same side, opposite side, on-plane average].
  std::vector<std::array<Coeffs, 3>> coeffs;
  for (const auto& h : handles.handles) {
    const AffineTransform r = reflect_transform(plane, h.transform);
    AffineTransform half;
    half.linear = 0.5 * (h.transform.linear + r.linear);
    half.translation = 0.5 * (h.transform.translation + r.translation);
    coeffs.push_back({coeffs_for(h.transform, mode), coeffs_for(r, mode), coeffs_for(half, mode)});
  }
  const Coeffs d0 = coeffs_for(handles.default_transform, BlendMode::literal);

  const std::size_t chunks = (rest.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, 1, [&](std::size_t cb, std::size_t ce) {
    auto state = std::make_unique<ChunkState>();
    std::vector<float> masked(kChunk);
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * kChunk, m = std::min(kChunk, rest.size() - b);
      state->load(rest, b, m);
      for (std::size_t k = 0; k < coeffs.size(); ++k) {
        const float* w = rows[k] + b;
        const std::int8_t hs = part.handle_side[k];
        // Split the row by relation so each pass stays a plain weighted sum.
        for (int rel = 0; rel < 3; ++rel) {
          bool any = false;
          for (std::size_t i = 0; i < m; ++i) {
            const std::int8_t vs = part.vertex_side[b + i];
            const int r = (hs == 0 || vs == 0) ? 2 : (hs == vs ? 0 : 1);
            masked[i] = r == rel ? w[i] : 0.f;
            any |= r == rel;
          }
          if (any) state->accumulate(coeffs[k][static_cast<std::size_t>(rel)], masked.data(), m);
        }
      }
      // wsum counted each weight once across the three passes.
      state->store(out, b, m, mode, d0);
    }
  });
  ++counters().poses;
}

HandleSet parse_handles_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("handle file is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw InputError("handle file must be a JSON array");
  HandleSet set;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("vertex") || !item["vertex"].is_number_unsigned())
      throw InputError("each handle needs an unsigned integer 'vertex'");
    Handle h;
    h.vertex = item["vertex"].get<std::uint32_t>();
    if (item.contains("matrix")) {
      const auto& m = item["matrix"];
      if (!m.is_array() || m.size() != 12) throw InputError("handle matrix must be 12 numbers (3x4 row-major)");
      std::array<double, 12> v{};
      for (std::size_t i = 0; i < 12; ++i) {
        if (!m[i].is_number()) throw InputError("handle matrix must be 12 numbers (3x4 row-major)");
        v[i] = m[i].get<double>();
      }
      h.transform = AffineTransform::from_rows(v);
    }
    set.handles.push_back(h);
  }
  return set;
}

HandleSet load_handles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_handles_json(ss.str());
}

std::string handles_to_json(const HandleSet& handles) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& h : handles.handles) j.push_back({{"vertex", h.vertex}, {"matrix", h.transform.to_rows()}});
  return j.dump();
}

}  // namespace dfd
