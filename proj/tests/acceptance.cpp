// Acceptance run: one PASS/FAIL line per criterion A1..A11.
//
//   acceptance            run everything
//   acceptance A3 A8      run a subset
//
// Exit status is nonzero if any selected criterion fails. Timings are
// wall-clock on whatever machine runs this; see README for reference numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "dfd/deform.hpp"
#include "dfd/mlp.hpp"
#include "dfd/server.hpp"
#include "dfd/session.hpp"
#include "dfd/symmetry.hpp"
#include "support.hpp"

using namespace dfd;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Smoothly bumped sphere, so decimated and dense versions look alike.
Mesh bumpy_sphere(std::size_t faces) {
  Mesh m = shapes::sphere_with_faces(faces);
  for (auto& v : m.vertices) {
    const float r = 1.f + 0.08f * std::sin(4 * v.x()) * std::sin(3 * v.y() + 1) * std::cos(5 * v.z());
    v *= r;
  }
  return m;
}

const Mesh& million_face_shape() {
  static const Mesh m = bumpy_sphere(1'000'000);
  return m;
}

// --- A1 ----------------------------------------------------------------------

Verdict identity_preservation() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> logf(std::log(1000.0), std::log(200000.0));
  std::uniform_real_distribution<float> u01(0, 1), jitter(-0.02f, 0.02f), scale(0.01f, 100.f);
  double worst = 0;
  std::size_t min_faces = SIZE_MAX, max_faces = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Mesh m = shapes::sphere_with_faces(static_cast<std::size_t>(std::exp(logf(rng))));
    const float s = scale(rng);
    const Vec3f offset(jitter(rng) * 1000, jitter(rng) * 1000, jitter(rng) * 1000);
    for (auto& v : m.vertices) v = s * (v + Vec3f(jitter(rng), jitter(rng), jitter(rng))) + offset;
    min_faces = std::min(min_faces, m.face_count());
    max_faces = std::max(max_faces, m.face_count());

    const std::size_t K = 1 + rng() % 20;
    WeightMatrix w;
    w.vertex_count = m.vertex_count();
    HandleSet h;
    for (std::size_t k = 0; k < K; ++k) {
      const auto v = static_cast<std::uint32_t>(rng() % m.vertex_count());
      w.handles.push_back(v);
      w.rows.emplace_back(m.vertex_count());
      for (auto& x : w.rows.back()) x = u01(rng);
      h.handles.push_back({v, AffineTransform::identity()});
    }
    const auto out = pose(m, w, h, BlendMode::displacement);
    const double diag = bounds_of(m).diagonal();
    double d = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
      d = std::max(d, (out[i].cast<double>() - m.vertices[i].cast<double>()).norm());
    worst = std::max(worst, d / diag);
  }
  return {worst < 1e-6, fmt("max displacement %.3g x diagonal over 50 meshes (%zu..%zu faces)", worst, min_faces,
                            max_faces)};
}

// --- A2 ----------------------------------------------------------------------

Verdict weight_formula() {
  double worst = 0;
  bool in_range = true;
  std::size_t checked = 0, nonzero = 0;
  auto check = [&](const VertexFeatures& z) {
    std::vector<std::uint32_t> all(z.count);
    for (std::uint32_t i = 0; i < z.count; ++i) all[i] = i;
    const auto w = dfd::bind(z, all);
    for (std::size_t k = 0; k < all.size(); ++k)
      for (std::size_t i = 0; i < z.count; ++i) {
        const double ref = test::reference_weight(z, i, all[k]);
        const float got = w.rows[k][i];
        worst = std::max(worst, std::abs(got - ref));
        in_range = in_range && got >= 0.f && got <= 1.f;
        nonzero += got > 0.f;
        ++checked;
      }
  };
  // Untrained full-size fields on ~1k-vertex meshes, and tighter random clusters.
  const Mesh meshes[] = {shapes::sphere_with_faces(2000), bumpy_sphere(2000), shapes::subdivide(shapes::subdivide(test::l_shape()))};
  std::uint64_t seed = 7;
  for (const Mesh& m : meshes) {
    const FeatureField f(FieldSpec{}, bounds_of(m), seed++);
    check(compute_vertex_features(f, m.vertices));
  }
  for (std::size_t c : {64u, 32u, 7u}) check(test::random_features(1000, c, seed++, 0.15));
  return {worst < 1e-6 && in_range,
          fmt("max |bind - reference| %.3g over %zu entries (%zu nonzero), all in [0,1]: %s", worst, checked,
              nonzero, in_range ? "yes" : "no")};
}

// --- A3 ----------------------------------------------------------------------

// Pixel-center ray from the camera definition, built here rather than
// taken from Camera::ray_direction.
Vec3d pixel_ray(const Camera& c, double px, double py) {
  const Vec3d fwd = (c.target - c.position).normalized();
  const Vec3d right = fwd.cross(c.up.normalized()).normalized();
  const Vec3d up = right.cross(fwd);
  const double t = std::tan(c.fov_deg * M_PI / 360.0);
  const double aspect = double(c.width) / double(c.height);
  return (fwd + (2 * px / c.width - 1) * t * aspect * right + (1 - 2 * py / c.height) * t * up).normalized();
}

Verdict barycentric_map() {
  const Mesh meshes[] = {shapes::icosphere(2), test::l_shape(), shapes::subdivide(test::l_shape()),
                         shapes::subdivide(shapes::subdivide(shapes::box({-1, -0.5f, -0.2f}, {1, 0.5f, 0.2f}))),
                         bumpy_sphere(480),
                         shapes::merge({shapes::icosphere(1, 0.6f), shapes::box({0.2f, -0.3f, -0.3f}, {1.f, 0.3f, 0.3f})})};
  double worst = 0;
  std::size_t covered = 0, agree = 0, coverage_mismatch = 0;
  for (const Mesh& m : meshes) {
    if (m.face_count() > 500) return {false, fmt("fixture has %zu faces", m.face_count())};
    CameraRig rig;
    rig.resolution = 96;
    for (const Camera& cam : fibonacci_cameras(6, m, rig)) {
      const RasterMap r = rasterize(m, cam);
      for (const auto& s : surface_points(r, m)) {
        ++covered;
        const Vec3d d = pixel_ray(cam, s.x + 0.5, s.y + 0.5);
        const auto hit = test::raycast(m, cam.position, d);
        if (!hit) {
          ++coverage_mismatch;
          continue;
        }
        worst = std::max(worst, (s.point.cast<double>() - (cam.position + hit->t * d)).norm());
        agree += hit->face == s.face;
      }
      for (std::uint32_t y = 0; y < r.height; ++y)
        for (std::uint32_t x = 0; x < r.width; ++x)
          if (!r.covered(x, y) && test::raycast(m, cam.position, pixel_ray(cam, x + 0.5, y + 0.5))) {
            ++coverage_mismatch;
            ++covered;
          }
    }
  }
  const double agreement = double(agree) / double(covered);
  return {worst < 1e-5 && agreement >= 0.999,
          fmt("max |P - ray hit| %.3g, face agreement %.5f over %zu pixels (%zu coverage mismatches)", worst,
              agreement, covered, coverage_mismatch)};
}

// --- A4 ----------------------------------------------------------------------

Verdict field_gradient() {
  const FieldSpec spec;  // full default widths
  const std::array<std::uint32_t, 5> widths{spec.input_width(), spec.hidden, spec.hidden, spec.hidden,
                                            spec.channels};
  Mlp<double> net(widths);
  net.initialize(3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int l = 0; l < Mlp<double>::kHidden; ++l) {
    for (Eigen::Index i = 0; i < net.scale(l).size(); ++i) net.scale(l)[i] = 1.0 + 0.3 * u(rng);
    for (Eigen::Index i = 0; i < net.shift(l).size(); ++i) net.shift(l)[i] = 0.2 * u(rng);
  }
  const int batch = 10;
  Mlp<double>::Matrix input(widths[0], batch), target(widths[4], batch);
  for (int j = 0; j < batch; ++j) {
    const double q[3] = {u(rng), u(rng), u(rng)};
    encode_position(q, spec.bands, input.col(j).data());
    for (Eigen::Index c = 0; c < target.rows(); ++c) target(c, j) = u(rng);
    target.col(j).normalize();
  }
  auto loss = [&] {
    Mlp<double>::Cache c;
    net.forward(input, c);
    return (c.output - target).squaredNorm();
  };
  Mlp<double>::Buffer grad(net.parameter_count(), 0.0);
  Mlp<double>::Cache cache;
  net.forward(input, cache);
  net.backward(input, cache, target, 1.0, grad);

  // Every parameter, at about a minute of central differences.
  auto& p = net.parameters();
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  const double h = 1e-6;
  double worst = 0, num2 = 0, den2 = 0;
  for (auto i : idx) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = loss();
    p[i] = saved - h;
    const double down = loss();
    p[i] = saved;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4}));
    num2 += (fd - grad[i]) * (fd - grad[i]);
    den2 += grad[i] * grad[i];
  }
  const double global = std::sqrt(num2 / den2);
  return {worst < 1e-4 && global < 1e-4,
          fmt("%zu/%zu parameters, widths %u-%u-%u-%u-%u, batch 10: max rel err %.3g, aggregate %.3g",
              idx.size(), p.size(), widths[0], widths[1], widths[2], widths[3], widths[4], worst, global)};
}

// --- A5 ----------------------------------------------------------------------

Verdict resolution_invariance() {
  const auto t0 = Clock::now();
  RenderConfig rc;
  rc.views = 24;
  rc.rig.resolution = 256;
  TrainConfig tc;
  tc.epochs = 2;
  SyntheticSource src;

  struct Run {
    std::size_t faces, render_faces, samples;
    double train;
  };
  auto run = [&](const Mesh& m) {
    const auto prep = render_synthetic(m, rc, src);
    const auto tf = train_field(prep.samples, tc, field_frame(m));
    return Run{m.face_count(), prep.shape.mesh.face_count(), prep.samples.samples.size(), tf.report.train_seconds};
  };
  const Run small = run(bumpy_sphere(10'000));
  const Run large = run(million_face_shape());
  const double total = since(t0);
  const double ratio = std::max(small.train, large.train) / std::min(small.train, large.train);
  const double dsamples = std::abs(double(large.samples) - double(small.samples)) / double(small.samples);
  return {ratio < 1.2 && dsamples < 0.02 && total < 600,
          fmt("%zu faces: |samples| %zu, train %.2fs; %zu faces (rendered %zu): |samples| %zu, train %.2fs; "
              "time ratio %.3f, |samples| diff %.2f%%, total %.0fs",
              small.faces, small.samples, small.train, large.faces, large.render_faces, large.samples, large.train,
              ratio, 100 * dsamples, total)};
}

// --- A6 ----------------------------------------------------------------------

Verdict bind_timing() {
  const Mesh m = shapes::sphere_with_faces(200'000);
  const FeatureField field(FieldSpec{}, bounds_of(m), 1);
  const auto z = compute_vertex_features(field, m.vertices);
  std::mt19937_64 rng(6);
  counters().reset();
  auto mean_bind = [&](std::size_t K) {
    double total = 0;
    std::vector<std::uint32_t> hs(K);
    for (int trial = 0; trial < 1000; ++trial) {
      for (auto& h : hs) h = static_cast<std::uint32_t>(rng() % z.count);
      const auto t0 = Clock::now();
      const auto w = dfd::bind(z, hs);
      total += since(t0);
      if (w.rows.size() != K) return -1.0;
    }
    return total / 1000;
  };
  const double one = mean_bind(1), hundred = mean_bind(100);
  const auto steps = counters().train_steps.load();
  const auto evals = counters().distance_evals.load();
  const bool evals_ok = evals == 1000ull * 101 * z.count;
  return {one >= 0 && one < 0.02 && hundred >= 0 && hundred < 0.2 && steps == 0 && evals_ok,
          fmt("n=%zu, C=%zu, 1000 trials: 1 handle %.4fs, 100 handles %.4fs; optimizer steps %llu, "
              "distance evals %s",
              z.count, z.channels, one, hundred, static_cast<unsigned long long>(steps),
              evals_ok ? "exact" : "unexpected")};
}

// --- A7 ----------------------------------------------------------------------

Verdict barycentric_ablation() {
  const Mesh original = bumpy_sphere(50'000);
  const Mesh coarse = decimate_qem(original, original.face_count() / 100);
  RenderConfig rc;
  rc.views = 24;
  rc.rig.resolution = 128;
  rc.decimate_threshold = SIZE_MAX;
  const std::uint32_t epochs = 10;

  // Four parts by quadrant of the face centroid, labelled on the mesh that
  // gets rendered.
  std::vector<std::uint32_t> labels(coarse.face_count());
  for (std::size_t f = 0; f < coarse.face_count(); ++f) {
    const auto& F = coarse.faces[f];
    const Vec3f c = (coarse.vertices[F[0]] + coarse.vertices[F[1]] + coarse.vertices[F[2]]) / 3.f;
    labels[f] = (c.x() > 0 ? 1u : 0u) + (c.z() > 0.2f ? 2u : 0u);
  }

  // Fixed handle: the original vertex nearest +x.
  std::uint32_t handle = 0;
  for (std::uint32_t i = 0; i < original.vertex_count(); ++i)
    if (original.vertices[i].x() > original.vertices[handle].x()) handle = i;

  double bary_sum = 0, vert_sum = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSource src;
    src.mode = SynthMode::parts;
    src.seed = seed;
    src.face_labels = labels;
    const auto bary = render_synthetic(coarse, rc, src);
    src.vertex_only = true;
    const auto vert = render_synthetic(coarse, rc, src);

    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 1000;
    tc.sample_budget = static_cast<std::uint64_t>(bary.covered_pixels) * epochs;
    auto roughness = [&](const SampleSet& s) {
      const auto tf = train_field(s, tc, field_frame(original));
      const auto z = compute_vertex_features(tf.field, original.vertices);
      const auto w = dfd::bind(z, std::vector<std::uint32_t>{handle});
      return std::pair{test::roughness(original, w.rows[0]), tf.report.processed_samples};
    };
    const auto [rb, pb] = roughness(bary.samples);
    const auto [rv, pv] = roughness(vert.samples);
    if (pb != pv) return {false, fmt("sample budgets differ: %llu vs %llu", (unsigned long long)pb, (unsigned long long)pv)};
    bary_sum += rb;
    vert_sum += rv;
    per_seed += fmt(" %.2f", rv / rb);
  }
  const double ratio = vert_sum / bary_sum;
  return {ratio >= 1.5, fmt("%zu -> %zu faces, parts features; mean roughness vertex %.4g / barycentric %.4g = %.2f (per seed:%s)",
                            original.face_count(), coarse.face_count(), vert_sum / 5, bary_sum / 5, ratio,
                            per_seed.c_str())};
}

// --- A8 ----------------------------------------------------------------------

// Doubled handles written out directly in double: each handle
// acts with D on its side of the plane, its mirrored copy with R D R on
// the other, and on-plane pairs take half of each.
std::vector<Vec3d> doubled_handles(const Mesh& m, const WeightMatrix& w, const HandleSet& h, const Vec3d& n,
                                   double offset, BlendMode mode) {
  const double tol = 1e-9 * bounds_of(m).diagonal();
  auto side = [&](const Vec3d& p) {
    const double s = n.dot(p) - offset;
    return s > tol ? 1 : s < -tol ? -1 : 0;
  };
  auto reflect = [&](const Vec3d& p) { return Vec3d(p - 2 * (n.dot(p) - offset) * n); };
  std::vector<Vec3d> out(m.vertex_count());
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Vec3d v = m.vertices[i].cast<double>();
    const int vs = side(v);
    Vec3d acc = mode == BlendMode::displacement ? v : Vec3d::Zero();
    double wsum = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const auto& d = h.handles[k].transform;
      const int hs = side(m.vertices[h.handles[k].vertex].cast<double>());
      const double own = (hs == 0 || vs == 0) ? 0.5 : (hs == vs ? 1.0 : 0.0);
      const double wk = w.rows[k][i];
      const Vec3d direct = d.apply(v), mirrored = reflect(d.apply(reflect(v)));
      if (mode == BlendMode::displacement)
        acc += wk * (own * (direct - v) + (1 - own) * (mirrored - v));
      else
        acc += wk * (own * direct + (1 - own) * mirrored);
      wsum += wk;
    }
    if (mode == BlendMode::pou) acc += std::max(1 - wsum, 0.0) * h.default_transform.apply(v);
    out[i] = acc;
  }
  return out;
}

Verdict symmetry() {
  const Mesh m = shapes::icosphere(3);
  const auto field = test::quick_field(m, SynthMode::mirror).field;
  const auto planes = detect_axis_symmetries(field, m);
  const bool detect_ok = planes.size() == 3 && planes[0].accepted && planes[0].score < 0.1 && !planes[1].accepted &&
                         !planes[2].accepted;
  std::string detail = fmt("scores x %.4f (%s), y %.4f (%s), z %.4f (%s)", planes[0].score,
                           planes[0].accepted ? "accepted" : "rejected", planes[1].score,
                           planes[1].accepted ? "accepted" : "rejected", planes[2].score,
                           planes[2].accepted ? "accepted" : "rejected");
  if (!detect_ok) return {false, detail};

  const auto z = compute_vertex_features(field, m.vertices);
  const Vec3d center = bounds_of(m).center().cast<double>();
  const double tol = plane_tolerance(m);
  // Handles on both sides and on the plane.
  std::vector<std::uint32_t> pos, neg, on;
  for (std::uint32_t i = 0; i < m.vertex_count(); ++i) {
    const double s = m.vertices[i].x() - center.x();
    (s > tol ? pos : s < -tol ? neg : on).push_back(i);
  }
  if (on.empty()) return {false, detail + "; fixture has no on-plane vertex"};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  auto random_affine = [&](double spread) {
    AffineTransform a;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a.linear(r, c) = (r == c) + spread * u(rng);
      a.translation[r] = 0.5 * u(rng);
    }
    return a;
  };
  double worst = 0;
  int cases = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const std::vector<std::uint32_t> ids{pos[rng() % pos.size()], neg[rng() % neg.size()], on[rng() % on.size()],
                                         pos[rng() % pos.size()]};
    const auto w = dfd::bind(z, ids);
    for (auto mode : {BlendMode::displacement, BlendMode::literal, BlendMode::pou}) {
      HandleSet h;
      for (auto v : ids) h.handles.push_back({v, random_affine(0.3)});
      h.default_transform = random_affine(0.1);
      for (const auto& plane : {planes[0], planes[0].flipped()}) {
        const auto got = pose_symmetric(m, w, h, plane, mode);
        const auto want = doubled_handles(m, w, h, plane.normal, plane.offset, mode);
        for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, (got[i].cast<double>() - want[i]).norm());
        ++cases;
      }
    }
  }
  return {worst < 1e-5, detail + fmt("; pose_symmetric vs doubled handles: max %.3g over %d cases", worst, cases)};
}

// --- A9 ----------------------------------------------------------------------

namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = boost::asio::ip::tcp;

// Minimal synchronous client. One buffer is reused across reads, so a
// 12 MB geometry frame is not reallocated and copied on every message.
struct WsClient {
  boost::asio::io_context ioc;
  ws::stream<tcp::socket> stream{ioc};
  beast::flat_buffer buf;

  explicit WsClient(std::uint16_t port) {
    tcp::resolver resolver(ioc);
    boost::asio::connect(stream.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    stream.handshake("127.0.0.1", "/");
    stream.read_message_max(0);
    buf.reserve(64 << 20);
  }
  void send(const Json& j) {
    stream.text(true);
    stream.write(boost::asio::buffer(j.dump()));
  }
  // Reads one message into `buf`; true if it was binary.
  bool read() {
    buf.consume(buf.size());
    stream.read(buf);
    return stream.got_binary();
  }
  // Reads until the reply carrying a revision and a frame at least that new.
  std::uint64_t await_frame(const std::string& reply_type) {
    std::uint64_t rev = 0, frame_rev = 0;
    for (;;) {
      if (read()) {
        std::memcpy(&frame_rev, buf.data().data(), 8);
      } else {
        const auto j = Json::parse(beast::buffers_to_string(buf.data()));
        if (j["type"] == "error") throw std::runtime_error(j.dump());
        if (j["type"] == reply_type) rev = j["rev"];
      }
      if (rev != 0 && frame_rev >= rev) return rev;
    }
  }
};

Verdict interactive_latency() {
  test::TempDir dir;
  const Mesh m = shapes::uv_sphere(1000, 1000);
  save_obj(dir / "m.obj", m);
  save_field(dir / "f.dfdf", FeatureField(FieldSpec{}, bounds_of(m), 2));

  EditServer server("127.0.0.1", 0, (dir / "m.obj").string(), (dir / "f.dfdf").string());
  std::thread th([&] { server.run(); });
  std::vector<double> add, update;
  std::string failure;
  try {
    WsClient c(server.port());
    // The connection auto-loads; wait for the rest frame.
    bool loaded = false, frame = false;
    while (!(loaded && frame)) (c.read() ? frame : loaded) = true;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    // Protocol-shaped session: click a vertex (add_handle carries only the
    // vertex), drag it, repeat up to K = 10; then keep dragging at K = 10.
    for (int k = 0; k < 10; ++k) {
      const auto t0 = Clock::now();
      c.send(Json{{"type", "add_handle"}, {"vertex", rng() % m.vertex_count()}});
      c.await_frame("handle_added");
      add.push_back(since(t0));
      c.send(Json{{"type", "update_handle"},
                  {"id", k},
                  {"matrix", AffineTransform::translate({u(rng), u(rng), u(rng)}).to_rows()}});
      c.await_frame("ack");
    }
    for (int t = 0; t < 60; ++t) {
      const auto t0 = Clock::now();
      c.send(Json{{"type", "update_handle"},
                  {"id", rng() % 10},
                  {"matrix", AffineTransform::translate({u(rng), u(rng), u(rng)}).to_rows()}});
      c.await_frame("ack");
      update.push_back(since(t0));
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }
  server.stop();
  th.join();
  if (!failure.empty()) return {false, "client error: " + failure};
  auto stats = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double mean = 0;
    for (double x : v) mean += x;
    return std::array<double, 3>{mean / v.size(), v[v.size() / 2], v.back()};
  };
  const auto a = stats(add), up = stats(update);
  return {a[0] < 0.050 && up[0] < 0.033,
          fmt("n=%zu over WebSocket: add_handle->frame mean %.1f ms (median %.1f, max %.1f, K=1..10); "
              "update_handle->frame mean %.1f ms (median %.1f, max %.1f, K=10)",
              m.vertex_count(), 1e3 * a[0], 1e3 * a[1], 1e3 * a[2], 1e3 * up[0], 1e3 * up[1], 1e3 * up[2])};
}

// --- A10 ---------------------------------------------------------------------

double part_mean(const std::vector<float>& row, const test::TwoParts& tp, std::uint32_t part) {
  std::vector<char> in(tp.mesh.vertex_count(), 0);
  for (std::size_t f = 0; f < tp.mesh.face_count(); ++f)
    if (tp.labels[f] == part)
      for (auto v : tp.mesh.faces[f]) in[v] = 1;
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (in[i]) s += row[i], ++n;
  return s / double(n);
}

Verdict locality_and_anchors() {
  // Locality: elementwise non-increasing in lambda.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<float> u01(0, 1);
  std::uniform_real_distribution<double> lam(0, 8);
  std::size_t violations = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 200 + rng() % 800;
    std::vector<float> w(n);
    GeodesicRow g{0, std::vector<float>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = u01(rng);
      g.distances[i] = rng() % 10 == 0 ? 1.f : u01(rng);
    }
    g.distances[0] = 0;
    double l1 = lam(rng), l2 = lam(rng);
    if (l1 > l2) std::swap(l1, l2);
    auto a = w, b = w;
    apply_locality_row(a, g, l1);
    apply_locality_row(b, g, l2);
    for (std::size_t i = 0; i < n; ++i) violations += !(b[i] <= a[i] && a[i] <= w[i] && b[i] >= 0.f);
  }

  // Parts field: isolation, and anchors.
  const auto tp = test::two_parts();
  test::QuickField q;
  q.steps = 200;
  const auto field = test::quick_field(tp.mesh, SynthMode::parts, q, tp.labels).field;
  const auto z = compute_vertex_features(field, tp.mesh.vertices);
  std::uint32_t handle = 0, anchor = 0;
  float best0 = 1e9f, best1 = 1e9f;
  for (std::uint32_t i = 0; i < tp.mesh.vertex_count(); ++i) {
    const auto& v = tp.mesh.vertices[i];
    const float d0 = (v - Vec3f(-0.7f, 0.5f, 0)).norm(), d1 = (v - Vec3f(0.7f, 0.5f, 0)).norm();
    if (d0 < best0) best0 = d0, handle = i;
    if (d1 < best1) best1 = d1, anchor = i;
  }
  const auto w = dfd::bind(z, std::vector<std::uint32_t>{handle});
  const auto self = apply_anchors(w, z, std::vector<std::uint32_t>{handle});
  const float at_handle = self.rows[0][handle];
  const double a0 = part_mean(w.rows[0], tp, 0), b0 = part_mean(w.rows[0], tp, 1);
  const auto anchored = apply_anchors(w, z, std::vector<std::uint32_t>{anchor});
  const double a1 = part_mean(anchored.rows[0], tp, 0), b1 = part_mean(anchored.rows[0], tp, 1);
  const bool pass = violations == 0 && at_handle == 0.f && a0 > 0.8 && b0 < 0.2 && b1 < 0.05 && a0 - a1 < 0.1;
  return {pass, fmt("lambda monotonicity violations %zu/100 draws; anchor on handle -> %.3g; part A %.3f / B %.3f; "
                    "with anchor on B: A %.3f (drop %.3f), B %.4f",
                    violations, at_handle, a0, b0, a1, a0 - a1, b1)};
}

// --- A11 ---------------------------------------------------------------------

Verdict distillation_time() {
  const Mesh& m = million_face_shape();
  const auto t0 = Clock::now();
  const RenderConfig rc;  // 100 views at 512, decimate above 50k faces
  SyntheticSource src;   // smooth, 64 channels
  const auto prep = render_synthetic(m, rc, src);
  const double prep_seconds = since(t0);
  TrainConfig tc;  // 10 epochs, batch 65536
  tc.time_budget_seconds = std::max(1.0, 120.0 - prep_seconds);
  const auto tf = train_field(prep.samples, tc, field_frame(m));
  const double total = since(t0);
  const double full = double(prep.samples.samples.size()) * tc.epochs;
  const double projected = prep_seconds + tf.report.train_seconds * full / double(tf.report.processed_samples);
  const bool complete = !tf.report.budget_exceeded;
  const double reported = complete ? total : projected;
  return {reported < 120,
          fmt("%zu faces: decimate %.1fs + render %.1fs, |samples| %zu, train %s after %.1fs (%llu/%.0f samples); "
              "%s %.0fs (target < 60s, fail above 120s)",
              m.face_count(), prep.shape.decimate_seconds, prep.shape.render_seconds, prep.samples.samples.size(),
              complete ? "finished" : "stopped by 120s cap", tf.report.train_seconds,
              (unsigned long long)tf.report.processed_samples, full, complete ? "total" : "projected total",
              reported)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"A1", identity_preservation}, {"A2", weight_formula},        {"A3", barycentric_map},
      {"A4", field_gradient},        {"A5", resolution_invariance}, {"A6", bind_timing},
      {"A7", barycentric_ablation},  {"A8", symmetry},              {"A9", interactive_latency},
      {"A10", locality_and_anchors}, {"A11", distillation_time},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0, run = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++run;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%-4s %s  %s  [%.1fs]\n", name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
