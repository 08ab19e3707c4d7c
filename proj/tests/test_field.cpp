#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "dfd/field.hpp"
#include "dfd/pipeline.hpp"
#include "support.hpp"

using namespace dfd;

namespace {

PreparedSamples small_smooth(const Mesh& m, std::uint32_t views = 6, std::uint32_t res = 64,
                             std::uint32_t channels = 16) {
  RenderConfig rc;
  rc.views = views;
  rc.rig.resolution = res;
  SyntheticSource src;
  src.mode = SynthMode::smooth;
  src.channels = channels;
  return render_synthetic(m, rc, src);
}

TrainConfig small_config(std::uint32_t channels = 16) {
  TrainConfig tc;
  tc.spec.channels = channels;
  tc.spec.hidden = 64;
  tc.batch = 512;
  tc.learning_rate = 3e-3;
  tc.epochs = 2;
  return tc;
}

}  // namespace

// Analytic parameter gradients against central differences, in double.
TEST(Mlp, GradientMatchesFiniteDifferences) {
  const std::uint32_t bands = 2;
  const std::array<std::uint32_t, 5> widths{encoded_width(bands), 16, 16, 16, 8};
  Mlp<double> net(widths);
  net.initialize(11);
  // Non-trivial LayerNorm parameters so their gradients are exercised too.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int l = 0; l < Mlp<double>::kHidden; ++l) {
    for (Eigen::Index i = 0; i < net.scale(l).size(); ++i) net.scale(l)[i] = 1.0 + 0.3 * u(rng);
    for (Eigen::Index i = 0; i < net.shift(l).size(); ++i) net.shift(l)[i] = 0.2 * u(rng);
  }

  const int batch = 10;
  Mlp<double>::Matrix input(widths[0], batch), target(widths[4], batch);
  for (int j = 0; j < batch; ++j) {
    const double q[3] = {u(rng), u(rng), u(rng)};
    encode_position(q, bands, input.col(j).data());
    for (Eigen::Index c = 0; c < target.rows(); ++c) target(c, j) = u(rng);
    target.col(j).normalize();
  }

  auto loss = [&]() {
    Mlp<double>::Cache c;
    net.forward(input, c);
    return (c.output - target).squaredNorm();
  };
  Mlp<double>::Buffer grad(net.parameter_count(), 0.0);
  Mlp<double>::Cache cache;
  net.forward(input, cache);
  const double l0 = net.backward(input, cache, target, 1.0, grad);
  EXPECT_NEAR(l0, loss(), 1e-12);

  const double h = 1e-6;
  double worst = 0, num2 = 0, den2 = 0;
  auto& p = net.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = loss();
    p[i] = saved - h;
    const double down = loss();
    p[i] = saved;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
    worst = std::max(worst, rel);
    num2 += (fd - grad[i]) * (fd - grad[i]);
    den2 += grad[i] * grad[i];
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_LT(std::sqrt(num2 / den2), 1e-6);
}

TEST(Mlp, EncodingLayout) {
  const float q[3] = {0.25f, -0.5f, 1.f};
  std::vector<float> out(encoded_width(2));
  encode_position(q, 2, out.data());
  EXPECT_EQ(out[0], 0.25f);
  EXPECT_EQ(out[2], 1.f);
  // Every remaining entry is a sin or cos of a scaled coordinate.
  for (std::size_t i = 3; i < out.size(); ++i) EXPECT_LE(std::abs(out[i]), 1.f);
  EXPECT_NEAR(out[3] * out[3] + out[4] * out[4], 1.f, 1e-6);  // sin^2 + cos^2 of pi*q.x
  EXPECT_NEAR(out[3], std::sin(3.14159265f * 0.25f), 1e-6);
}

TEST(Field, EvalIsUnitNormAndDeterministic) {
  const FeatureField f(FieldSpec{Encoding::fourier, 6, 32, 24}, Bounds{Vec3f(-2, -1, -1), Vec3f(2, 1, 1)}, 3);
  std::vector<Vec3f> pts;
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-3, 3);
  for (int i = 0; i < 5000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const auto a = f.eval(pts);
  const auto b = f.eval(pts);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), pts.size() * 24);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double n = 0;
    for (int c = 0; c < 24; ++c) n += a[i * 24 + c] * a[i * 24 + c];
    ASSERT_NEAR(n, 1.0, 1e-5);
  }
  // Batch composition only changes float rounding.
  const auto single = f.eval(std::span(pts).subspan(17, 1));
  for (int c = 0; c < 24; ++c) EXPECT_NEAR(single[c], a[17 * 24 + c], 1e-5);
}

TEST(Field, TrainingLossDecreasesOnSmoothTask) {
  const Mesh m = shapes::icosphere(3);
  const auto prep = small_smooth(m);
  TrainConfig tc = small_config();
  tc.epochs = 8;
  counters().reset();
  const auto r = train_field(prep.samples, tc, field_frame(m)).report;
  ASSERT_EQ(r.epoch_loss.size(), 9u);
  for (std::size_t e = 1; e < r.epoch_loss.size(); ++e)
    EXPECT_LE(r.epoch_loss[e], r.epoch_loss[e - 1] + 1e-3) << "epoch " << e;
  EXPECT_LT(r.epoch_loss.back(), 0.5 * r.epoch_loss.front());
  EXPECT_EQ(counters().train_steps.load(), r.steps);
  EXPECT_EQ(r.processed_samples, 8 * prep.samples.size());
}

TEST(Field, FitsSmoothTargetsAndIsLocallySmooth) {
  const Mesh m = shapes::icosphere(3);
  test::QuickField q;
  q.steps = 250;
  q.channels = 16;
  const auto t = test::quick_field(m, SynthMode::smooth, q);
  EXPECT_LT(t.report.epoch_loss.back(), 0.02);

  const double diag = bounds_of(m).diagonal();
  std::mt19937 rng(2);
  std::normal_distribution<float> g;
  std::vector<Vec3f> a, b;
  for (const auto& v : m.vertices) {
    Vec3f d(g(rng), g(rng), g(rng));
    a.push_back(v);
    b.push_back(v + d.normalized() * static_cast<float>(1e-3 * diag));
  }
  const auto fa = t.field.eval(a), fb = t.field.eval(b);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s = 0;
    for (int c = 0; c < 16; ++c) s += std::pow(fa[i * 16 + c] - fb[i * 16 + c], 2);
    worst = std::max(worst, std::sqrt(s));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Field, ConstantTargetIsLearned) {
  SampleSet s;
  s.channels = 4;
  std::mt19937 rng(0);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int i = 0; i < 2000; ++i) {
    RenderSample r;
    r.point = Vec3f(u(rng), u(rng), u(rng));
    s.samples.push_back(r);
    for (float v : {0.5f, 0.5f, 0.5f, 0.5f}) s.features.push_back(v);
  }
  TrainConfig tc = small_config(4);
  tc.epochs = 20;
  const auto t = train_field(s, tc, Bounds{Vec3f::Constant(-1), Vec3f::Constant(1)});
  EXPECT_LT(t.report.epoch_loss.back(), 1e-3);
  const auto out = t.field.eval(std::vector<Vec3f>{Vec3f(0.1f, 0.2f, -0.3f)});
  for (float v : out) EXPECT_NEAR(v, 0.5f, 0.02f);
}

TEST(Field, ZeroEpochsReturnsInitialization) {
  const Mesh m = shapes::icosphere(2);
  const auto prep = small_smooth(m, 3, 48);
  TrainConfig tc = small_config();
  tc.epochs = 0;
  const auto t = train_field(prep.samples, tc, field_frame(m));
  EXPECT_EQ(t.report.steps, 0u);
  EXPECT_EQ(t.report.epoch_loss.size(), 1u);
  const FeatureField init(tc.spec, field_frame(m), tc.seed);
  EXPECT_EQ(t.field.network().parameters(), init.network().parameters());
}

TEST(Field, SeededTrainingIsReproducible) {
  const Mesh m = shapes::icosphere(2);
  const auto prep = small_smooth(m, 3, 48);
  TrainConfig tc = small_config();
  tc.max_steps = 10;
  const auto a = train_field(prep.samples, tc, field_frame(m));
  const auto b = train_field(prep.samples, tc, field_frame(m));
  EXPECT_EQ(a.field.network().parameters(), b.field.network().parameters());
}

TEST(Field, Errors) {
  SampleSet tiny;
  tiny.channels = 16;
  tiny.samples.resize(999);
  tiny.features.assign(999 * 16, 0.25f);
  EXPECT_THROW(train_field(tiny, small_config(), Bounds{Vec3f::Zero(), Vec3f::Ones()}), InputError);

  const Mesh m = shapes::icosphere(2);
  const auto prep = small_smooth(m, 3, 48);
  EXPECT_THROW(train_field(prep.samples, small_config(32), field_frame(m)), InputError);
  TrainConfig zero = small_config();
  zero.batch = 0;
  EXPECT_THROW(train_field(prep.samples, zero, field_frame(m)), InputError);
}

TEST(Field, NonFiniteLossAborts) {
  const Mesh m = shapes::icosphere(2);
  auto prep = small_smooth(m, 3, 48);
  prep.samples.features[5] = std::numeric_limits<float>::infinity();
  try {
    train_field(prep.samples, small_config(), field_frame(m));
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(Field, CheckpointRoundTrip) {
  test::TempDir dir;
  const FeatureField f(FieldSpec{Encoding::fourier, 4, 32, 16}, Bounds{Vec3f(-1, -2, -3), Vec3f(1, 2, 3)}, 9);
  save_field(dir / "f.dfdf", f);
  const FeatureField g = load_field(dir / "f.dfdf");
  EXPECT_EQ(g.spec().bands, 4u);
  EXPECT_EQ(g.spec().hidden, 32u);
  EXPECT_EQ(g.channels(), 16u);
  EXPECT_EQ(g.frame().max, f.frame().max);
  const std::vector<Vec3f> pts{Vec3f(0.1f, 0.2f, 0.3f), Vec3f(-0.9f, 1.5f, 2.f)};
  EXPECT_EQ(f.eval(pts), g.eval(pts));

  const FeatureField raw(FieldSpec{Encoding::none, 0, 8, 4}, Bounds{Vec3f::Constant(-1), Vec3f::Constant(1)}, 1);
  save_field(dir / "r.dfdf", raw);
  EXPECT_EQ(load_field(dir / "r.dfdf").spec().encoding, Encoding::none);

  std::filesystem::copy_file(dir / "f.dfdf", dir / "t.dfdf");
  std::filesystem::resize_file(dir / "t.dfdf", std::filesystem::file_size(dir / "t.dfdf") - 8);
  EXPECT_THROW(load_field(dir / "t.dfdf"), FormatError);

  std::filesystem::copy_file(dir / "f.dfdf", dir / "v.dfdf");
  {
    std::fstream io(dir / "v.dfdf", std::ios::in | std::ios::out | std::ios::binary);
    const std::uint32_t two = 2;
    io.seekp(4);
    io.write(reinterpret_cast<const char*>(&two), 4);
  }
  try {
    load_field(dir / "v.dfdf");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  {
    std::ofstream bad(dir / "m.dfdf", std::ios::binary);
    bad << "NOPE0000000000000000000000000000";
  }
  EXPECT_THROW(load_field(dir / "m.dfdf"), FormatError);
  EXPECT_THROW(load_field(dir / "missing.dfdf"), InputError);
}

TEST(VertexAblation, OneVertexPerPixel) {
  const Mesh m = shapes::icosphere(2);
  CameraRig rig;
  rig.resolution = 64;
  const auto cams = fibonacci_cameras(4, m, rig);
  std::vector<RasterMap> rasters;
  std::vector<FeatureImage> imgs;
  for (std::uint32_t v = 0; v < cams.size(); ++v) {
    rasters.push_back(rasterize(m, cams[v]));
    SynthOptions o;
    o.channels = 8;
    o.view = v;
    imgs.push_back(synth_features(m, rasters.back(), SynthMode::smooth, o));
  }
  const SampleSet s = vertex_samples(m, cams, rasters, imgs);
  std::vector<std::size_t> per_view(cams.size(), 0);
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> pixels;
  for (const auto& r : s.samples) {
    ++per_view[r.view];
    EXPECT_TRUE(pixels.insert({r.view, r.x, r.y}).second);
    // The sample sits exactly on a mesh vertex of its face.
    const auto& f = m.faces[r.face];
    const float total = r.bary[0] + r.bary[1] + r.bary[2];
    EXPECT_EQ(total, 1.f);
    EXPECT_TRUE(r.point == m.vertices[f[0]] || r.point == m.vertices[f[1]] || r.point == m.vertices[f[2]]);
  }
  for (std::size_t v = 0; v < cams.size(); ++v) {
    EXPECT_GT(per_view[v], 0u);
    EXPECT_LE(per_view[v], std::min(m.vertices.size(), rasters[v].coverage()));
  }
}

TEST(VertexAblation, MatchesSampleBudget) {
  const Mesh m = shapes::icosphere(3);
  RenderConfig rc;
  rc.views = 6;
  rc.rig.resolution = 64;
  SyntheticSource src;
  src.channels = 16;
  src.vertex_only = true;
  const auto prep = render_synthetic(m, rc, src);
  TrainConfig tc = small_config();
  const std::uint64_t budget = 20000;
  tc.sample_budget = budget;
  const auto t = train_field(prep.samples, tc, field_frame(m));
  EXPECT_EQ(t.report.processed_samples, budget);
}
