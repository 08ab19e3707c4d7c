#include "dfd/features.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include "dfd/binary_io.hpp"

namespace dfd {

SampleSet attach_features(const std::vector<RenderSample>& samples,
                          const std::vector<FeatureImage>& images, std::span<const Camera> cameras) {
  std::map<std::uint32_t, const FeatureImage*> by_view;
  std::size_t channels = 0;
  for (const auto& img : images) {
    if (channels == 0) channels = img.channels;
    if (img.channels != channels || channels == 0)
      throw InputError("feature images disagree on channel count");
    if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
      throw InputError("feature image " + std::to_string(img.view) + " has wrong data size");
    if (!cameras.empty()) {
      if (img.view >= cameras.size()) throw InputError("feature image for unknown view");
      const auto& cam = cameras[img.view];
      if (cam.width != img.width || cam.height != img.height)
        throw InputError("resolution mismatch for view " + std::to_string(img.view));
    }
    for (float v : img.data)
      if (!std::isfinite(v)) throw InputError("NaN in feature data for view " + std::to_string(img.view));
    by_view[img.view] = &img;
  }

  std::vector<const float*> src(samples.size(), nullptr);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto it = by_view.find(s.view);
    if (it == by_view.end()) throw InputError("missing feature image for view " + std::to_string(s.view));
    const auto* img = it->second;
    if (s.x >= img->width || s.y >= img->height)
      throw InputError("resolution mismatch for view " + std::to_string(s.view));
    src[i] = img->at(s.x, s.y);
  }

  std::vector<float> norms(samples.size());
  parallel_for(samples.size(), 1 << 15, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double acc = 0;
      for (std::size_t c = 0; c < channels; ++c) acc += static_cast<double>(src[i][c]) * src[i][c];
      norms[i] = static_cast<float>(std::sqrt(acc));
    }
  });

  SampleSet set;
  set.channels = channels;
  std::size_t kept = 0;
  for (float n : norms) kept += n >= 1e-8f;
  set.samples.reserve(kept);
  set.features.resize(kept * channels);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(norms[i] >= 1e-8f)) {
      ++set.dropped;
      continue;
    }
    float* dst = set.features.data() + set.samples.size() * channels;
    const float inv = 1.f / norms[i];
    for (std::size_t c = 0; c < channels; ++c) dst[c] = src[i][c] * inv;
    set.samples.push_back(samples[i]);
  }
  return set;
}

SynthMode parse_synth_mode(const std::string& name) {
  if (name == "parts") return SynthMode::parts;
  if (name == "smooth") return SynthMode::smooth;
  if (name == "mirror") return SynthMode::mirror;
  throw InputError("unknown synthetic encoder '" + name + "' (parts|smooth|mirror)");
}

std::string to_string(SynthMode mode) {
  switch (mode) {
    case SynthMode::parts: return "parts";
    case SynthMode::smooth: return "smooth";
    case SynthMode::mirror: return "mirror";
  }
  return "?";
}

namespace {

struct Wave {
  Vec3f direction;
  float frequency;
  float phase;
};

// Fixed wave table shared by smooth/mirror; independent of any user seed.
const std::vector<Wave>& wave_table(std::uint32_t count) {
  static std::map<std::uint32_t, std::vector<Wave>> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto& table = cache[count];
  if (table.empty()) {
    constexpr float kFrequencies[3] = {1.5f, 3.0f, 4.5f};
    std::mt19937 rng(0x5eed);
    std::normal_distribution<float> normal;
    std::uniform_real_distribution<float> uniform(0.f, 6.2831853f);
    for (std::uint32_t m = 0; m < count; ++m) {
      Vec3f d(normal(rng), normal(rng), normal(rng));
      d.normalize();
      table.push_back({d, kFrequencies[m % 3], uniform(rng)});
    }
  }
  return table;
}

}  // namespace

void synth_point_feature(SynthMode mode, const Bounds& frame, const Vec3f& p,
                         std::uint32_t channels, float* out) {
  const std::uint32_t waves = channels / 2;
  const auto& table = wave_table(waves);
  const float half = std::max(frame.max_half_extent(), 1e-12f);
  const Vec3f q = (p - frame.center()) / half;
  const float scale = 1.f / std::sqrt(static_cast<float>(waves));
  for (std::uint32_t m = 0; m < waves; ++m) {
    const auto& w = table[m];
    const float x_term = mode == SynthMode::mirror ? q.x() * q.x() : q.x();
    const float arg = w.direction.x() * x_term + w.direction.y() * q.y() + w.direction.z() * q.z();
    const float theta = w.frequency * arg + w.phase;
    out[2 * m] = scale * std::sin(theta);
    out[2 * m + 1] = scale * std::cos(theta);
  }
  if (channels % 2) out[channels - 1] = 0.f;
}

FeatureImage synth_features(const Mesh& mesh, const RasterMap& raster, SynthMode mode,
                            const SynthOptions& options) {
  if (options.channels < 2) throw InputError("synthetic encoders need at least 2 channels");
  FeatureImage img;
  img.view = options.view;
  img.width = raster.width;
  img.height = raster.height;
  img.channels = options.channels;
  img.data.assign(static_cast<std::size_t>(img.width) * img.height * img.channels, 0.f);

  if (mode == SynthMode::parts) {
    if (options.face_labels.size() != mesh.faces.size())
      throw InputError("`parts` encoder needs a part-label sidecar with one label per face");
    std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ull + options.view);
    std::normal_distribution<float> normal;
    std::vector<float> noise(options.channels);
    for (std::uint32_t y = 0; y < raster.height; ++y)
      for (std::uint32_t x = 0; x < raster.width; ++x) {
        const auto fi = raster.face[raster.index(x, y)];
        if (fi == kNoFace) continue;
        const auto label = options.face_labels[fi];
        if (label >= options.channels)
          throw InputError("part label " + std::to_string(label) + " exceeds channel count");
        double n2 = 0;
        for (auto& v : noise) {
          v = normal(rng);
          n2 += static_cast<double>(v) * v;
        }
        const float s = n2 > 0 ? static_cast<float>(0.05 / std::sqrt(n2)) : 0.f;
        float* dst = img.at(x, y);
        for (std::uint32_t c = 0; c < options.channels; ++c) dst[c] = s * noise[c];
        dst[label] += 1.f;
      }
    return img;
  }

  const Bounds frame = options.frame ? *options.frame : bounds_of(mesh);
  for (std::uint32_t y = 0; y < raster.height; ++y)
    for (std::uint32_t x = 0; x < raster.width; ++x) {
      const auto idx = raster.index(x, y);
      const auto fi = raster.face[idx];
      if (fi == kNoFace) continue;
      const auto& f = mesh.faces[fi];
      const auto& b = raster.bary[idx];
      const Vec3f p = b[0] * mesh.vertices[f[0]] + b[1] * mesh.vertices[f[1]] + b[2] * mesh.vertices[f[2]];
      synth_point_feature(mode, frame, p, options.channels, img.at(x, y));
    }
  return img;
}

std::vector<std::uint32_t> load_face_labels(const std::filesystem::path& path, std::size_t face_count) {
  std::ifstream in(path);
  if (!in) throw InputError("missing part-label sidecar " + path.string());
  std::vector<std::uint32_t> labels;
  labels.reserve(face_count);
  long v;
  while (in >> v) {
    if (v < 0) throw InputError("negative part label in " + path.string());
    labels.push_back(static_cast<std::uint32_t>(v));
  }
  if (labels.size() != face_count)
    throw InputError(path.string() + ": expected " + std::to_string(face_count) + " labels, got " +
                     std::to_string(labels.size()));
  return labels;
}

void save_face_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (auto l : labels) out << l << '\n';
}

void write_fmap(const std::filesystem::path& path, const FeatureImage& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw InputError("feature image data size does not match its header");
  io::Writer w(path);
  w.magic("DFDF");
  w.put<std::uint32_t>(1);
  w.put<std::uint32_t>(image.view);
  w.put<std::uint32_t>(image.height);
  w.put<std::uint32_t>(image.width);
  w.put<std::uint32_t>(image.channels);
  w.put_array(image.data.data(), image.data.size());
  w.finish();
}

FeatureImage read_fmap(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DFDF");
  r.expect_version(1);
  FeatureImage img;
  img.view = r.get<std::uint32_t>();
  img.height = r.get<std::uint32_t>();
  img.width = r.get<std::uint32_t>();
  img.channels = r.get<std::uint32_t>();
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (count == 0) throw FormatError(path.string() + ": empty feature map");
  if (count > (std::size_t{1} << 34)) throw FormatError(path.string() + ": implausible feature map size");
  img.data.resize(count);
  r.get_array(img.data.data(), count);
  return img;
}

void write_rsmp(const std::filesystem::path& path, const std::vector<RenderSample>& samples) {
  io::Writer w(path);
  w.magic("DFDS");
  w.put<std::uint32_t>(1);
  w.put<std::uint64_t>(samples.size());
  for (const auto& s : samples) {
    const std::uint32_t head[4] = {s.view, s.x, s.y, s.face};
    const float tail[6] = {s.bary[0], s.bary[1], s.bary[2], s.point.x(), s.point.y(), s.point.z()};
    w.put_array(head, 4);
    w.put_array(tail, 6);
  }
  w.finish();
}

std::vector<RenderSample> read_rsmp(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DFDS");
  r.expect_version(1);
  const auto count = r.get<std::uint64_t>();
  const auto size = std::filesystem::file_size(path);
  if (count > (size - 16) / 40) throw FormatError(path.string() + ": truncated file");
  std::vector<RenderSample> out(count);
  for (auto& s : out) {
    std::uint32_t head[4];
    float tail[6];
    r.get_array(head, 4);
    r.get_array(tail, 6);
    s.view = head[0];
    s.x = head[1];
    s.y = head[2];
    s.face = head[3];
    s.bary = {tail[0], tail[1], tail[2]};
    s.point = Vec3f(tail[3], tail[4], tail[5]);
  }
  return out;
}

}  // namespace dfd
