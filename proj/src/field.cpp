#include "dfd/field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "dfd/binary_io.hpp"

namespace dfd {

FeatureField::FeatureField(const FieldSpec& spec, const Bounds& frame, std::uint64_t seed)
    : spec_(spec), frame_(frame), net_(spec.widths()) {
  if (spec.channels < 1 || spec.hidden < 1) throw InputError("field widths must be positive");
  net_.initialize(seed);
}

Mlp<float>::Matrix FeatureField::encode(std::span<const Vec3f> points) const {
  const Vec3f center = frame_.center();
  const float inv_half = 1.f / std::max(frame_.max_half_extent(), 1e-12f);
  Mlp<float>::Matrix x(spec_.input_width(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3f q = (points[i] - center) * inv_half;
    const float qa[3] = {q.x(), q.y(), q.z()};
    float* col = x.col(static_cast<Eigen::Index>(i)).data();
    if (spec_.encoding == Encoding::fourier) encode_position(qa, spec_.bands, col);
    else std::copy(qa, qa + 3, col);
  }
  return x;
}

std::vector<float> FeatureField::eval(std::span<const Vec3f> points) const {
  constexpr std::size_t kBatch = 8192;
  const std::size_t C = spec_.channels;
  std::vector<float> out(points.size() * C);
  parallel_for(points.size(), kBatch, [&](std::size_t b, std::size_t e) {
    Mlp<float>::Cache cache;
    net_.forward(encode(points.subspan(b, e - b)), cache);
    for (std::size_t i = b; i < e; ++i) {
      const auto col = cache.output.col(static_cast<Eigen::Index>(i - b));
      float* dst = out.data() + i * C;
      double n2 = 0;
      for (std::size_t c = 0; c < C; ++c) n2 += static_cast<double>(col[c]) * col[c];
      if (n2 > 0) {
        // Renormalize in double so every row is unit length to float precision.
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t c = 0; c < C; ++c) dst[c] = static_cast<float>(col[c] * inv);
      } else {
        std::fill(dst, dst + C, 0.f);
        dst[0] = 1.f;
      }
    }
  });
  return out;
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["epoch_loss"] = epoch_loss;
  j["sample_count"] = sample_count;
  j["steps"] = steps;
  j["processed_samples"] = processed_samples;
  j["budget_exceeded"] = budget_exceeded;
  j["seconds"] = {{"decimate", decimate_seconds}, {"render", render_seconds}, {"train", train_seconds}};
  j["config"] = {{"optimizer", "adam"},
                 {"learning_rate", config.learning_rate},
                 {"beta1", config.beta1},
                 {"beta2", config.beta2},
                 {"batch", config.batch},
                 {"epochs", config.epochs},
                 {"max_steps", config.max_steps},
                 {"sample_budget", config.sample_budget},
                 {"seed", config.seed},
                 {"encoding", config.spec.encoding == Encoding::fourier ? "fourier" : "none"},
                 {"bands", config.spec.bands},
                 {"hidden", config.spec.hidden},
                 {"channels", config.spec.channels}};
  return j.dump(2);
}

namespace {

class Trainer {
 public:
  Trainer(const SampleSet& samples, const TrainConfig& config, FeatureField& field)
      : samples_(samples), config_(config), field_(field), net_(field.network()) {
    const std::size_t P = net_.parameter_count();
    m_.assign(P, 0.f);
    v_.assign(P, 0.f);
    grad_.assign(P, 0.f);
  }

  // Mean loss and (optionally) accumulated gradient over the given samples.
  double run_batch(std::span<const std::uint32_t> batch, bool with_grad) {
    const std::size_t chunk = std::max<std::uint32_t>(config_.chunk, 1);
    const std::size_t nchunks = (batch.size() + chunk - 1) / chunk;
    if (chunk_grads_.size() < nchunks) chunk_grads_.resize(nchunks);
    if (caches_.size() < nchunks) caches_.resize(nchunks);
    std::vector<double> losses(nchunks, 0.0);
    const float grad_scale = 1.f / static_cast<float>(batch.size());
    const std::size_t C = samples_.channels;

    parallel_for(nchunks, 1, [&](std::size_t cb, std::size_t ce) {
      std::vector<Vec3f> pts;
      for (std::size_t c = cb; c < ce; ++c) {
        const auto part = batch.subspan(c * chunk, std::min(chunk, batch.size() - c * chunk));
        pts.resize(part.size());
        Mlp<float>::Matrix targets(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(part.size()));
        for (std::size_t i = 0; i < part.size(); ++i) {
          pts[i] = samples_.samples[part[i]].point;
          std::copy_n(samples_.feature(part[i]), C, targets.col(static_cast<Eigen::Index>(i)).data());
        }
        const auto input = field_.encode(pts);
        auto& cache = caches_[c];
        net_.forward(input, cache);
        if (with_grad) {
          auto& g = chunk_grads_[c];
          g.assign(net_.parameter_count(), 0.f);
          losses[c] = net_.backward(input, cache, targets, grad_scale, g);
        } else {
          losses[c] = (cache.output - targets).squaredNorm();
        }
      }
    });

    double loss = 0;
    for (double l : losses) loss += l;  // fixed order
    if (with_grad) {
      std::fill(grad_.begin(), grad_.end(), 0.f);
      for (std::size_t c = 0; c < nchunks; ++c) {
        const auto& g = chunk_grads_[c];
        for (std::size_t k = 0; k < grad_.size(); ++k) grad_[k] += g[k];
      }
    }
    return loss / static_cast<double>(batch.size());
  }

  void adam_step() {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const float lr = static_cast<float>(config_.learning_rate * std::sqrt(c2) / c1);
    const float eps = static_cast<float>(config_.adam_eps * std::sqrt(c2));
    const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
    auto& p = net_.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const float g = grad_[k];
      m_[k] = fb1 * m_[k] + (1.f - fb1) * g;
      v_[k] = fb2 * v_[k] + (1.f - fb2) * g * g;
      p[k] -= lr * m_[k] / (std::sqrt(v_[k]) + eps);
    }
  }

 private:
  const SampleSet& samples_;
  const TrainConfig& config_;
  FeatureField& field_;
  Mlp<float>& net_;
  std::vector<float> m_, v_, grad_;
  std::vector<Mlp<float>::Buffer> chunk_grads_;
  std::vector<Mlp<float>::Cache> caches_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainedField train_field(const SampleSet& samples, const TrainConfig& config, const Bounds& frame) {
  if (samples.size() < 1000)
    throw InputError("training needs at least 1000 samples, got " + std::to_string(samples.size()));
  if (samples.channels != config.spec.channels)
    throw InputError("inconsistent channel counts: samples have " + std::to_string(samples.channels) +
                     ", field expects " + std::to_string(config.spec.channels));
  if (config.batch < 1) throw InputError("batch size must be positive");

  Stopwatch clock;
  TrainedField out{FeatureField(config.spec, frame, config.seed), {}};
  auto& report = out.report;
  report.config = config;
  report.sample_count = samples.size();
  Trainer trainer(samples, config, out.field);

  const std::size_t N = samples.size();
  std::vector<std::uint32_t> order(N);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(config.seed ^ 0xD1B54A32D192ED03ull);

  {
    std::vector<std::uint32_t> probe = order;
    std::shuffle(probe.begin(), probe.end(), rng);
    probe.resize(std::min<std::size_t>(N, 65536));
    report.epoch_loss.push_back(trainer.run_batch(probe, false));
  }

  const std::size_t batch = std::min<std::size_t>(config.batch, N);
  std::uint64_t epochs = config.epochs;
  if (config.sample_budget > 0) epochs = (config.sample_budget + N - 1) / N;
  bool stop = false;
  for (std::uint64_t epoch = 0; epoch < epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < N; b += batch) {
      std::size_t len = std::min(batch, N - b);
      if (config.sample_budget > 0)
        len = static_cast<std::size_t>(std::min<std::uint64_t>(len, config.sample_budget - report.processed_samples));
      const double loss = trainer.run_batch(std::span(order).subspan(b, len), true);
      if (!std::isfinite(loss)) {
        report.train_seconds = clock.seconds();
        throw TrainingAborted("training loss became non-finite at step " + std::to_string(report.steps),
                              report);
      }
      trainer.adam_step();
      ++report.steps;
      ++counters().train_steps;
      report.processed_samples += len;
      loss_sum += loss * static_cast<double>(len);
      seen += len;
      if (config.max_steps > 0 && report.steps >= config.max_steps) stop = true;
      if (config.sample_budget > 0 && report.processed_samples >= config.sample_budget) stop = true;
      if (config.time_budget_seconds > 0 && clock.seconds() > config.time_budget_seconds) {
        report.budget_exceeded = true;
        stop = true;
      }
      if (stop) break;
    }
    if (seen > 0) report.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  report.train_seconds = clock.seconds();
  return out;
}

SampleSet vertex_samples(const Mesh& mesh, std::span<const Camera> cameras,
                         std::span<const RasterMap> rasters, std::span<const FeatureImage> images) {
  if (cameras.size() != rasters.size() || cameras.size() != images.size())
    throw InputError("vertex distillation needs one raster and one feature image per camera");
  const float radius = bounding_sphere_of(mesh).radius;
  const double depth_tol = 1e-2 * radius;

  SampleSet set;
  set.channels = images.empty() ? 0 : images.front().channels;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const auto& cam = cameras[v];
    const auto& raster = rasters[v];
    const auto& img = images[v];
    if (img.channels != set.channels) throw InputError("inconsistent channel counts");
    if (img.width != raster.width || img.height != raster.height)
      throw InputError("resolution mismatch for view " + std::to_string(v));

    // Best vertex per pixel: the one projecting closest to the pixel center.
    std::vector<std::uint32_t> best(static_cast<std::size_t>(raster.width) * raster.height, kNoFace);
    std::vector<double> best_dist(best.size(), 1e300);
    for (std::uint32_t i = 0; i < mesh.vertices.size(); ++i) {
      const Vec3d c = cam.to_camera(mesh.vertices[i].cast<double>());
      if (c.z() < cam.near_plane) continue;
      const auto px = cam.to_pixel(c);
      if (!(px.x() >= 0 && px.y() >= 0 && px.x() < raster.width && px.y() < raster.height)) continue;
      const auto x = static_cast<std::uint32_t>(px.x()), y = static_cast<std::uint32_t>(px.y());
      const auto idx = raster.index(x, y);
      const auto fi = raster.face[idx];
      if (fi == kNoFace) continue;
      const auto& f = mesh.faces[fi];
      const bool on_face = f[0] == i || f[1] == i || f[2] == i;
      if (!on_face && std::abs(static_cast<double>(raster.depth[idx]) - c.z()) > depth_tol) continue;
      const double d = (px - Eigen::Vector2d(x + 0.5, y + 0.5)).squaredNorm();
      if (d < best_dist[idx]) {
        best_dist[idx] = d;
        best[idx] = i;
      }
    }
    for (std::uint32_t y = 0; y < raster.height; ++y)
      for (std::uint32_t x = 0; x < raster.width; ++x) {
        const auto idx = raster.index(x, y);
        const auto vi = best[idx];
        if (vi == kNoFace) continue;
        const float* raw = img.at(x, y);
        double n2 = 0;
        for (std::size_t c = 0; c < set.channels; ++c) n2 += static_cast<double>(raw[c]) * raw[c];
        if (!(n2 >= 1e-16)) {
          ++set.dropped;
          continue;
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(n2));
        RenderSample s;
        s.point = mesh.vertices[vi];
        s.view = static_cast<std::uint32_t>(v);
        s.x = x;
        s.y = y;
        s.face = raster.face[idx];
        const auto& f = mesh.faces[s.face];
        s.bary = {f[0] == vi ? 1.f : 0.f, f[1] == vi ? 1.f : 0.f, f[2] == vi ? 1.f : 0.f};
        set.samples.push_back(s);
        for (std::size_t c = 0; c < set.channels; ++c) set.features.push_back(raw[c] * inv);
      }
  }
  return set;
}

TrainedField train_field_vertex_ablation(const Mesh& mesh, std::span<const Camera> cameras,
                                         std::span<const RasterMap> rasters,
                                         std::span<const FeatureImage> images, const TrainConfig& config,
                                         std::uint64_t matched_samples, const Bounds& frame) {
  const SampleSet set = vertex_samples(mesh, cameras, rasters, images);
  TrainConfig cfg = config;
  cfg.sample_budget = matched_samples;
  return train_field(set, cfg, frame);
}

void save_field(const std::filesystem::path& path, const FeatureField& field) {
  const auto& spec = field.spec();
  io::Writer w(path);
  w.magic("DFDW");
  w.put<std::uint32_t>(1);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.encoding));
  w.put<std::uint32_t>(spec.bands);
  const auto widths = spec.widths();
  w.put_array(widths.data(), widths.size());
  w.put<std::uint32_t>(spec.channels);
  const auto& fr = field.frame();
  const float bounds[6] = {fr.min.x(), fr.min.y(), fr.min.z(), fr.max.x(), fr.max.y(), fr.max.z()};
  w.put_array(bounds, 6);
  const auto& params = field.network().parameters();
  w.put_array(params.data(), params.size());
  w.finish();
}

FeatureField load_field(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DFDW");
  r.expect_version(1);
  FieldSpec spec;
  const auto enc = r.get<std::uint8_t>();
  if (enc > 1) throw FormatError(path.string() + ": unknown encoding kind " + std::to_string(enc));
  spec.encoding = static_cast<Encoding>(enc);
  spec.bands = r.get<std::uint32_t>();
  std::array<std::uint32_t, 5> widths;
  r.get_array(widths.data(), widths.size());
  spec.channels = r.get<std::uint32_t>();
  spec.hidden = widths[1];
  if (spec.bands > 32 || widths != spec.widths() || widths[2] != widths[1] || widths[3] != widths[1])
    throw FormatError(path.string() + ": inconsistent network widths");
  float b[6];
  r.get_array(b, 6);
  Bounds frame{Vec3f(b[0], b[1], b[2]), Vec3f(b[3], b[4], b[5])};
  FeatureField field(spec, frame, 0);
  auto& params = field.network().parameters();
  r.get_array(params.data(), params.size());
  return field;
}

}  // namespace dfd
