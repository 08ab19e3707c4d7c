// dfd: render -> features -> distill -> bind -> pose, plus symmetry, bench
// and the interactive edit server.

#include <sys/file.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dfd/deform.hpp"
#include "dfd/pipeline.hpp"
#include "dfd/server.hpp"
#include "dfd/symmetry.hpp"
#include "dfd/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfd;

namespace {

// One command per work directory at a time.
class WorkLock {
 public:
  explicit WorkLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / ".dfd.lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw InputError("cannot create lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw InputError("work directory " + dir.string() + " is in use by another dfd command");
    }
  }
  ~WorkLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WorkLock(const WorkLock&) = delete;
  WorkLock& operator=(const WorkLock&) = delete;

 private:
  int fd_ = -1;
};

std::string view_file(std::uint32_t view, const char* ext) { return "view_" + std::to_string(view) + ext; }

std::vector<std::uint32_t> parse_index_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw InputError("bad index '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("bad number '" + item + "'");
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text << '\n';
  if (!out) throw InputError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

struct RenderOpts {
  std::uint32_t views = 100;
  std::uint32_t resolution = 512;
  std::size_t decimate = 50000;
  double radius_factor = CameraRig{}.radius_factor;

  RenderConfig config() const {
    RenderConfig c;
    c.views = views;
    c.decimate_threshold = decimate;
    c.rig.resolution = resolution;
    c.rig.radius_factor = radius_factor;
    return c;
  }
  void add_to(CLI::App* cmd) {
    cmd->add_option("--views", views, "Number of Fibonacci views")->capture_default_str();
    cmd->add_option("--res", resolution, "Square render resolution")->capture_default_str();
    cmd->add_option("--decimate", decimate, "Decimate above this many faces")->capture_default_str();
    cmd->add_option("--radius-factor", radius_factor, "Camera distance in bounding radii")->capture_default_str();
  }
};

struct TrainOpts {
  std::uint32_t epochs = 10;
  std::uint64_t max_steps = 0;
  std::uint32_t batch = 65536;
  double lr = 1e-3;
  std::uint32_t bands = 6;
  std::uint32_t channels = 64;
  std::string encoding = "fourier";
  std::uint64_t seed = 0;

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.max_steps = max_steps;
    c.batch = batch;
    c.learning_rate = lr;
    c.seed = seed;
    c.spec.bands = bands;
    c.spec.channels = channels;
    if (encoding == "fourier") c.spec.encoding = Encoding::fourier;
    else if (encoding == "none") c.spec.encoding = Encoding::none;
    else throw InputError("encoding must be fourier or none");
    return c;
  }
  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs)->capture_default_str();
    cmd->add_option("--max-steps", max_steps, "Cap on optimizer steps (0 = none)")->capture_default_str();
    cmd->add_option("--batch", batch)->capture_default_str();
    cmd->add_option("--lr", lr)->capture_default_str();
    cmd->add_option("--bands", bands, "Fourier frequency bands")->capture_default_str();
    cmd->add_option("--encoding", encoding, "fourier|none")->capture_default_str();
  }
};

// render: decimate if large, rasterize views, write images, cameras and samples.
void cmd_render(const fs::path& mesh_path, const fs::path& work, const RenderOpts& ro, bool images) {
  WorkLock lock(work);
  const Mesh mesh = load_mesh(mesh_path);
  fs::create_directories(work / "render");
  double image_seconds = 0;
  const auto shape = render_shape(mesh, ro.config(), [&](std::uint32_t v, const Camera& cam, const RasterMap& r, const Mesh& rm) {
    if (!images) return;
    Stopwatch sw;
    write_png(work / "render" / view_file(v, ".png"), shade(r, rm, cam));
    image_seconds += sw.seconds();
  });
  save_camera_manifest(work / "render" / "cameras.json", shape.cameras);
  write_rsmp(work / "samples.rsmp", shape.samples);
  save_obj(work / "render_mesh.obj", shape.mesh);
  const json report = {{"decimated", shape.decimated},
                       {"input_faces", mesh.faces.size()},
                       {"render_faces", shape.mesh.faces.size()},
                       {"views", shape.cameras.size()},
                       {"samples", shape.samples.size()},
                       {"seconds", {{"decimate", shape.decimate_seconds}, {"render", shape.render_seconds - image_seconds},
                                    {"images", image_seconds}}}};
  write_text(work / "render_report.json", report.dump(2));
  std::cout << report.dump() << '\n';
}

// synth-features: built-in encoders over stored samples, one .fmap per view.
void cmd_synth(const fs::path& mesh_path, const fs::path& work, const std::string& mode_name,
               std::uint32_t channels, std::uint64_t seed, const std::string& labels_path) {
  WorkLock lock(work);
  const SynthMode mode = parse_synth_mode(mode_name);
  const Mesh original = load_mesh(mesh_path);
  const Mesh render_mesh = load_mesh(work / "render_mesh.obj");
  const auto cameras = load_camera_manifest(work / "render" / "cameras.json");
  const auto samples = read_rsmp(work / "samples.rsmp");
  std::vector<std::uint32_t> labels;
  if (mode == SynthMode::parts) {
    if (labels_path.empty()) throw InputError("--labels is required for parts features");
    labels = load_face_labels(labels_path, original.faces.size());
    if (render_mesh.faces.size() != original.faces.size() || render_mesh.vertices != original.vertices)
      labels = transfer_face_labels(original, labels, render_mesh);
  }
  std::map<std::uint32_t, std::vector<RenderSample>> by_view;
  for (const auto& s : samples) by_view[s.view].push_back(s);
  fs::create_directories(work / "features");
  for (std::uint32_t v = 0; v < cameras.size(); ++v) {
    const RasterMap r = raster_from_samples(by_view[v], v, cameras[v].width, cameras[v].height);
    SynthOptions opts;
    opts.channels = channels;
    opts.seed = seed;
    opts.view = v;
    opts.face_labels = labels;
    opts.frame = field_frame(original);
    write_fmap(work / "features" / view_file(v, ".fmap"), synth_features(render_mesh, r, mode, opts));
  }
  std::cout << json{{"views", cameras.size()}, {"channels", channels}, {"mode", to_string(mode)}}.dump() << '\n';
}

// distill: trains the field. With --synthetic it renders in-process, view by
// view; otherwise it reads the render artifacts and per-view .fmap files.
void cmd_distill(const fs::path& mesh_path, const fs::path& work, const std::string& synthetic,
                 const fs::path& features_dir, const std::string& labels_path, const RenderOpts& ro,
                 const TrainOpts& to, const std::string& ablation, const fs::path& out_path) {
  WorkLock lock(work);
  if (!ablation.empty() && ablation != "vertex") throw InputError("--ablation must be 'vertex'");
  const bool vertex_only = ablation == "vertex";
  const Mesh original = load_mesh(mesh_path);
  TrainConfig tc = to.config();

  SampleSet samples;
  double decimate_s = 0, render_s = 0;
  std::size_t covered = 0;
  if (!synthetic.empty()) {
    SyntheticSource src;
    src.mode = parse_synth_mode(synthetic);
    src.channels = to.channels;
    src.seed = to.seed;
    src.vertex_only = vertex_only;
    if (src.mode == SynthMode::parts) {
      if (labels_path.empty()) throw InputError("--labels is required for parts features");
      src.face_labels = load_face_labels(labels_path, original.faces.size());
    }
    auto prep = render_synthetic(original, ro.config(), src);
    samples = std::move(prep.samples);
    covered = prep.covered_pixels;
    decimate_s = prep.shape.decimate_seconds;
    render_s = prep.shape.render_seconds;
  } else {
    const fs::path fdir = features_dir.empty() ? work / "features" : features_dir;
    const Mesh render_mesh = load_mesh(work / "render_mesh.obj");
    const auto cameras = load_camera_manifest(work / "render" / "cameras.json");
    const auto all = read_rsmp(work / "samples.rsmp");
    covered = all.size();
    if (fs::exists(work / "render_report.json")) {
      const json rep = read_json(work / "render_report.json");
      decimate_s = rep["seconds"].value("decimate", 0.0);
      render_s = rep["seconds"].value("render", 0.0);
    }
    std::map<std::uint32_t, std::vector<RenderSample>> by_view;
    for (const auto& s : all) by_view[s.view].push_back(s);
    for (std::uint32_t v = 0; v < cameras.size(); ++v) {
      const FeatureImage img = read_fmap(fdir / view_file(v, ".fmap"));
      if (img.view != v) throw InputError("feature file for view " + std::to_string(v) + " claims view " +
                                          std::to_string(img.view));
      SampleSet part;
      if (vertex_only) {
        const RasterMap r = rasterize(render_mesh, cameras[v]);
        part = vertex_samples(render_mesh, std::span<const Camera>(&cameras[v], 1), std::span<const RasterMap>(&r, 1),
                              std::span<const FeatureImage>(&img, 1));
        for (auto& s : part.samples) s.view = v;
      } else {
        part = attach_features(by_view[v], {img}, cameras);
      }
      if (samples.channels == 0) samples.channels = part.channels;
      samples.dropped += part.dropped;
      samples.samples.insert(samples.samples.end(), part.samples.begin(), part.samples.end());
      samples.features.insert(samples.features.end(), part.features.begin(), part.features.end());
    }
    tc.spec.channels = static_cast<std::uint32_t>(samples.channels);
  }
  if (vertex_only) tc.sample_budget = static_cast<std::uint64_t>(covered) * tc.epochs;

  auto trained = train_field(samples, tc, field_frame(original));
  trained.report.decimate_seconds = decimate_s;
  trained.report.render_seconds = render_s;
  const fs::path out = out_path.empty() ? work / "field.dfdf" : out_path;
  save_field(out, trained.field);
  write_text(work / "distill_report.json", trained.report.to_json());
  std::cout << json{{"decimate", decimate_s}, {"render", render_s}, {"train", trained.report.train_seconds},
                    {"samples", samples.size()}, {"dropped", samples.dropped},
                    {"final_loss", trained.report.epoch_loss.back()}, {"field", out.string()}}
                   .dump()
            << '\n';
}

std::vector<GeodesicRow> geodesic_rows(const Mesh& mesh, std::span<const std::uint32_t> handles) {
  const EdgeGraph graph = build_edge_graph(mesh);
  std::vector<GeodesicRow> rows;
  for (auto h : handles) rows.push_back(geodesics_from(graph, h));
  return rows;
}

WeightMatrix weights_for(const Mesh& mesh, const VertexFeatures& z, std::span<const std::uint32_t> handles,
                         std::span<const std::uint32_t> anchors, double lambda) {
  WeightMatrix w = dfd::bind(z, handles);
  w = apply_anchors(w, z, anchors);
  if (lambda > 0) w = apply_locality(w, geodesic_rows(mesh, handles), lambda);
  else if (lambda < 0) throw InputError("--lambda must be >= 0");
  return w;
}

void cmd_bind(const fs::path& mesh_path, const fs::path& field_path, const std::string& handles,
              const std::string& anchors, double lambda, const fs::path& out) {
  const Mesh mesh = load_mesh(mesh_path);
  const FeatureField field = load_field(field_path);
  std::vector<std::uint32_t> hs = handles.ends_with(".json") ? load_handles(handles).vertices() : parse_index_list(handles);
  const auto an = parse_index_list(anchors);
  const VertexFeatures z = compute_vertex_features(field, mesh.vertices);
  Stopwatch sw;
  const WeightMatrix w = weights_for(mesh, z, hs, an, lambda);
  const double secs = sw.seconds();
  write_weights(out, w);
  std::cout << json{{"handles", hs.size()}, {"vertices", mesh.vertices.size()}, {"bind_seconds", secs},
                    {"weights", out.string()}}
                   .dump()
            << '\n';
}

std::optional<SymmetryPlane> parse_symmetry(const std::string& spec, const FeatureField& field, const Mesh& mesh,
                                            const VertexFeatures& z) {
  if (spec == "none") return std::nullopt;
  if (spec == "auto") {
    std::optional<SymmetryPlane> best;
    for (const auto& p : detect_axis_symmetries(field, mesh, z))
      if (p.accepted && (!best || p.score < best->score)) best = p;
    if (!best) std::cerr << "dfd: no accepted symmetry plane; posing without symmetry\n";
    return best;
  }
  if (spec.starts_with("plane=")) {
    const auto v = parse_number_list(spec.substr(6));
    if (v.size() != 4) throw InputError("--symmetry plane=nx,ny,nz,offset");
    const Vec3d n(v[0], v[1], v[2]);
    if (!(n.norm() > 0)) throw InputError("symmetry plane normal must be nonzero");
    SymmetryPlane p{n.normalized(), v[3] / n.norm(), 0, false};
    return evaluate_plane(field, mesh, z, p);
  }
  throw InputError("--symmetry must be auto, none or plane=nx,ny,nz,offset");
}

void cmd_pose(const fs::path& mesh_path, const fs::path& field_path, const fs::path& handles_path,
              const std::string& mode_name, double lambda, const std::string& anchors, const std::string& symmetry,
              bool force, const fs::path& weights_path, const fs::path& out) {
  const Mesh mesh = load_mesh(mesh_path);
  const BlendMode mode = parse_blend_mode(mode_name);
  const HandleSet handles = load_handles(handles_path);
  const auto hv = handles.vertices();
  for (auto h : hv)
    if (h >= mesh.vertices.size()) throw InputError("handle vertex " + std::to_string(h) + " out of range");

  std::optional<FeatureField> field;
  std::optional<VertexFeatures> z;
  auto features = [&]() -> const VertexFeatures& {
    if (!z) {
      if (field_path.empty()) throw InputError("--field is required unless --weights covers everything");
      field = load_field(field_path);
      z = compute_vertex_features(*field, mesh.vertices);
    }
    return *z;
  };

  WeightMatrix w;
  if (!weights_path.empty()) {
    w = read_weights(weights_path);
  } else {
    w = weights_for(mesh, features(), hv, parse_index_list(anchors), lambda);
  }
  std::optional<SymmetryPlane> plane;
  if (symmetry != "none") {
    features();
    plane = parse_symmetry(symmetry, *field, mesh, *z);
  }
  const auto posed = plane ? pose_symmetric(mesh, w, handles, *plane, mode, force) : pose(mesh, w, handles, mode);
  save_obj(out, posed, mesh.faces);
  json info = {{"vertices", posed.size()}, {"mode", to_string(mode)}, {"out", out.string()}};
  if (plane) info["symmetry"] = {{"normal", {plane->normal.x(), plane->normal.y(), plane->normal.z()}},
                                 {"offset", plane->offset}, {"score", plane->score}, {"accepted", plane->accepted}};
  std::cout << info.dump() << '\n';
}

void cmd_symmetry(const fs::path& mesh_path, const fs::path& field_path, double epsilon) {
  const Mesh mesh = load_mesh(mesh_path);
  const FeatureField field = load_field(field_path);
  for (const auto& p : detect_axis_symmetries(field, mesh, epsilon))
    std::cout << json{{"normal", {p.normal.x(), p.normal.y(), p.normal.z()}}, {"offset", p.offset},
                      {"score", p.score}, {"accepted", p.accepted}}
                     .dump()
              << '\n';
}

// Remesh to roughly `faces` faces: subdivide up past it, then decimate down.
Mesh remesh_to(const Mesh& mesh, std::size_t faces) {
  Mesh m = mesh;
  while (m.faces.size() < faces) m = shapes::subdivide(m);
  return m.faces.size() > faces ? decimate_qem(m, faces) : m;
}

void cmd_bench(const fs::path& mesh_path, const fs::path& field_path, const std::string& resolutions,
               const std::string& sizes, std::uint32_t trials, std::uint32_t pose_trials, std::uint64_t seed,
               const fs::path& out) {
  const Mesh mesh = load_mesh(mesh_path);
  const FeatureField field = load_field(field_path);
  std::ofstream csv;
  std::ostream* sink = &std::cout;
  if (!out.empty()) {
    csv.open(out);
    if (!csv) throw InputError("cannot write " + out.string());
    sink = &csv;
  }
  *sink << "faces,vertices,phase,handles,trials,mean_seconds,min_seconds,max_seconds\n";
  std::mt19937_64 rng(seed);
  for (const auto target : parse_index_list(resolutions)) {
    const Mesh m = remesh_to(mesh, target);
    const std::size_t n = m.vertices.size();
    auto row = [&](const char* phase, std::size_t k, const std::vector<double>& t) {
      const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
      *sink << m.faces.size() << ',' << n << ',' << phase << ',' << k << ',' << t.size() << ',' << mean << ','
            << *std::min_element(t.begin(), t.end()) << ',' << *std::max_element(t.begin(), t.end()) << '\n';
      sink->flush();
    };
    Stopwatch sw;
    const VertexFeatures z = compute_vertex_features(field, m.vertices);
    row("preprocess", 0, {sw.seconds()});
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (const auto k : parse_index_list(sizes)) {
      std::vector<double> bind_t, pose_t;
      HandleSet hs;
      WeightMatrix w;
      for (std::uint32_t t = 0; t < trials; ++t) {
        std::vector<std::uint32_t> handles(k);
        for (auto& h : handles) h = pick(rng);
        sw.reset();
        w = dfd::bind(z, handles);
        bind_t.push_back(sw.seconds());
        if (t < pose_trials) {
          hs.handles.clear();
          for (auto h : handles) hs.handles.push_back({h, AffineTransform::translate(Vec3d(0.01, 0.02, 0.0))});
          sw.reset();
          const auto posed = pose(m, w, hs);
          pose_t.push_back(sw.seconds());
        }
      }
      row("bind", k, bind_t);
      if (!pose_t.empty()) row("pose", k, pose_t);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep feature deformation: distill a feature field, bind weights, pose meshes"};
  app.require_subcommand(1);

  RenderOpts ro;
  TrainOpts to;
  fs::path mesh_path, work = "dfd_work", field_path, out, features_dir, weights_path, handles_path;
  std::string synthetic, labels, ablation, handles, anchors, mode = "displacement", symmetry = "none";
  std::string resolutions = "10000,100000", sizes = "1,10,100", address = "127.0.0.1";
  double lambda = 0, epsilon = kDefaultSymmetryEpsilon;
  bool no_images = false, force = false;
  std::uint32_t trials = 1000, pose_trials = 20;
  std::uint16_t port = 8765;

  auto* render = app.add_subcommand("render", "Decimate if needed, render views, write surface samples");
  render->add_option("--mesh", mesh_path, "Input OBJ/PLY")->required();
  render->add_option("--work", work, "Work directory")->capture_default_str();
  render->add_flag("--no-images", no_images, "Skip shaded PNG output");
  ro.add_to(render);

  auto* synth = app.add_subcommand("synth-features", "Write synthetic per-view feature maps");
  synth->add_option("--mesh", mesh_path, "Original mesh (normalization frame)")->required();
  synth->add_option("--work", work)->capture_default_str();
  synth->add_option("--mode", synthetic, "parts|smooth|mirror")->required();
  synth->add_option("--channels", to.channels)->capture_default_str();
  synth->add_option("--seed", to.seed)->capture_default_str();
  synth->add_option("--labels", labels, "Per-face part labels (parts mode)");

  auto* distill = app.add_subcommand("distill", "Train the feature field");
  distill->add_option("--mesh", mesh_path)->required();
  distill->add_option("--work", work)->capture_default_str();
  distill->add_option("--synthetic", synthetic, "Render and use a built-in encoder: parts|smooth|mirror");
  distill->add_option("--features", features_dir, "Directory of view_<k>.fmap (default <work>/features)");
  distill->add_option("--labels", labels, "Per-face part labels (parts mode)");
  distill->add_option("--channels", to.channels, "Channels for synthetic features")->capture_default_str();
  distill->add_option("--seed", to.seed)->capture_default_str();
  distill->add_option("--ablation", ablation, "vertex: supervise at visible vertices only");
  distill->add_option("--out", out, "Field checkpoint (default <work>/field.dfdf)");
  ro.add_to(distill);
  to.add_to(distill);

  auto* bindc = app.add_subcommand("bind", "Compute blending weights for a handle set");
  bindc->add_option("--mesh", mesh_path)->required();
  bindc->add_option("--field", field_path)->required();
  bindc->add_option("--handles", handles, "Comma-separated vertices or a handle .json")->required();
  bindc->add_option("--anchors", anchors, "Comma-separated anchor vertices");
  bindc->add_option("--lambda", lambda, "Locality exponent")->capture_default_str();
  bindc->add_option("--out", out, "Output .wts")->required();

  auto* posec = app.add_subcommand("pose", "Deform a mesh from a handle file");
  posec->add_option("--mesh", mesh_path)->required();
  posec->add_option("--field", field_path);
  posec->add_option("--handles", handles_path, "JSON [{vertex, matrix[12]}]")->required();
  posec->add_option("--weights", weights_path, "Precomputed .wts (skips binding)");
  posec->add_option("--mode", mode, "literal|displacement|pou")->capture_default_str();
  posec->add_option("--lambda", lambda)->capture_default_str();
  posec->add_option("--anchors", anchors);
  posec->add_option("--symmetry", symmetry, "auto|none|plane=nx,ny,nz,offset")->capture_default_str();
  posec->add_flag("--force-symmetry", force, "Use the symmetry plane even if it was rejected");
  posec->add_option("--out", out, "Output OBJ")->required();

  auto* sym = app.add_subcommand("symmetry", "Score the three axis planes (JSON lines)");
  sym->add_option("--mesh", mesh_path)->required();
  sym->add_option("--field", field_path)->required();
  sym->add_option("--epsilon", epsilon)->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Time preprocess/bind/pose per resolution (CSV)");
  bench->add_option("--mesh", mesh_path)->required();
  bench->add_option("--field", field_path)->required();
  bench->add_option("--resolutions", resolutions, "Target face counts")->capture_default_str();
  bench->add_option("--sizes", sizes, "Handle-set sizes")->capture_default_str();
  bench->add_option("--trials", trials, "Bind repetitions per size")->capture_default_str();
  bench->add_option("--pose-trials", pose_trials)->capture_default_str();
  bench->add_option("--seed", to.seed)->capture_default_str();
  bench->add_option("--out", out, "CSV path (default stdout)");

  auto* serve = app.add_subcommand("serve", "Interactive edit server (WebSocket)");
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--address", address)->capture_default_str();
  serve->add_option("--mesh", mesh_path);
  serve->add_option("--field", field_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (render->parsed()) cmd_render(mesh_path, work, ro, !no_images);
    else if (synth->parsed()) cmd_synth(mesh_path, work, synthetic, to.channels, to.seed, labels);
    else if (distill->parsed())
      cmd_distill(mesh_path, work, synthetic, features_dir, labels, ro, to, ablation, out);
    else if (bindc->parsed()) cmd_bind(mesh_path, field_path, handles, anchors, lambda, out);
    else if (posec->parsed())
      cmd_pose(mesh_path, field_path, handles_path, mode, lambda, anchors, symmetry, force, weights_path, out);
    else if (sym->parsed()) cmd_symmetry(mesh_path, field_path, epsilon);
    else if (bench->parsed()) cmd_bench(mesh_path, field_path, resolutions, sizes, trials, pose_trials, to.seed, out);
    else if (serve->parsed()) {
      if (mesh_path.empty() != field_path.empty()) throw InputError("--mesh and --field go together");
      EditServer server(address, port, mesh_path.string(), field_path.string());
      std::cout << json{{"listening", address}, {"port", server.port()}}.dump() << std::endl;
      server.run(true);
    }
  } catch (const InputError& e) {
    std::cerr << "dfd: " << e.what() << '\n';
    return 2;
  } catch (const TrainingAborted& e) {
    std::cerr << "dfd: " << e.what() << '\n' << e.report.to_json() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "dfd: internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
