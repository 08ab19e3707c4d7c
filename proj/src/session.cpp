#include "dfd/session.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace dfd {

std::string GeometryFrame::encode() const {
  const std::uint64_t n = vertices.size();
  std::string out(16 + 12 * n, '\0');
  std::memcpy(out.data(), &revision, 8);
  std::memcpy(out.data() + 8, &n, 8);
  static_assert(sizeof(Vec3f) == 12, "Vec3f must be three packed floats");
  std::memcpy(out.data() + 16, vertices.data(), 12 * n);
  return out;
}

GeometryFrame GeometryFrame::decode(const std::string& bytes) {
  if (bytes.size() < 16) throw FormatError("geometry frame too short");
  GeometryFrame f;
  std::uint64_t n = 0;
  std::memcpy(&f.revision, bytes.data(), 8);
  std::memcpy(&n, bytes.data() + 8, 8);
  if ((bytes.size() - 16) % 12 != 0 || n != (bytes.size() - 16) / 12)
    throw FormatError("geometry frame length does not match its vertex count");
  f.vertices.resize(n);
  std::memcpy(static_cast<void*>(f.vertices.data()), bytes.data() + 16, 12 * n);
  return f;
}

std::string PoseJob::run_encoded() const {
  const std::uint64_t n = mesh->vertices.size();
  std::string out(16 + 12 * n, '\0');
  std::memcpy(out.data(), &revision, 8);
  std::memcpy(out.data() + 8, &n, 8);
  std::vector<const float*> ptrs;
  for (const auto& r : rows) ptrs.push_back(r->data());
  float* dst = reinterpret_cast<float*>(out.data() + 16);
  if (plane)
    pose_symmetric_rows_to(*mesh, ptrs, handles, *plane, mode, true, dst);
  else
    pose_rows_to(mesh->vertices, ptrs, handles, mode, dst);
  return out;
}

GeometryFrame PoseJob::run() const {
  GeometryFrame frame;
  frame.revision = revision;
  std::vector<const float*> ptrs;
  for (const auto& r : rows) ptrs.push_back(r->data());
  frame.vertices = plane ? pose_symmetric_rows(*mesh, ptrs, handles, *plane, mode, true)
                         : pose_rows(mesh->vertices, ptrs, handles, mode);
  return frame;
}

namespace {

// Exact comparison: only a transform whose coefficients are exactly those
// of the identity is guaranteed to contribute exact zeros.
bool is_identity(const AffineTransform& d) {
  return d.linear == Mat3d::Identity() && d.translation == Vec3d::Zero();
}

Json plane_json(const SymmetryPlane& p) {
  return {{"normal", {p.normal.x(), p.normal.y(), p.normal.z()}},
          {"offset", p.offset},
          {"score", p.score},
          {"accepted", p.accepted}};
}

SymmetryPlane plane_from_json(const Json& j) {
  if (!j.contains("normal") || !j["normal"].is_array() || j["normal"].size() != 3)
    throw InputError("plane needs a 3-element 'normal'");
  Vec3d n(j["normal"][0].get<double>(), j["normal"][1].get<double>(), j["normal"][2].get<double>());
  if (!(n.norm() > 0) || !n.allFinite()) throw InputError("plane normal must be finite and nonzero");
  const double norm = n.norm();
  SymmetryPlane p;
  p.normal = n / norm;
  p.offset = j.value("offset", 0.0) / norm;
  p.score = j.value("score", 0.0);
  p.accepted = j.value("accepted", false);
  return p;
}

AffineTransform matrix_from_json(const Json& m) {
  if (!m.is_array() || m.size() != 12) throw InputError("matrix must be 12 numbers (3x4 row-major)");
  std::array<double, 12> v{};
  for (std::size_t i = 0; i < 12; ++i) {
    if (!m[i].is_number()) throw InputError("matrix must be 12 numbers (3x4 row-major)");
    v[i] = m[i].get<double>();
  }
  return AffineTransform::from_rows(v);
}

std::uint32_t vertex_from_json(const Json& m, const char* key, std::size_t n) {
  if (!m.contains(key) || !m[key].is_number_integer()) throw InputError(std::string("missing integer '") + key + "'");
  const auto v = m[key].get<std::int64_t>();
  if (v < 0 || static_cast<std::size_t>(v) >= n)
    throw InputError("vertex " + std::to_string(v) + " out of range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

PoseJob Session::current_job() const {
  PoseJob job;
  job.revision = revision_;
  job.mesh = mesh_;
  for (const auto& r : rows_) job.rows.push_back(r.effective);
  job.handles = handles_;
  job.mode = mode_;
  job.plane = plane_;
  return job;
}

Session::Outcome Session::mutated(Json reply) {
  ++revision_;
  reply["rev"] = revision_;
  Outcome out;
  out.replies.push_back(std::move(reply));
  out.pose = current_job();
  return out;
}

Session::Outcome Session::handle_message(const Json& message) {
  std::string type = "?";
  try {
    if (!message.is_object() || !message.contains("type") || !message["type"].is_string())
      throw InputError("message needs a string 'type'");
    type = message["type"].get<std::string>();
    return dispatch(type, message);
  } catch (const std::exception& e) {
    Outcome out;
    out.replies.push_back({{"type", "error"}, {"request", type}, {"message", e.what()}, {"rev", revision_}});
    return out;
  }
}

Session::Outcome Session::load(std::shared_ptr<const Mesh> mesh, FeatureField field) {
  mesh->validate();
  VertexFeatures z = compute_vertex_features(field, mesh->vertices);
  mesh_ = std::move(mesh);
  field_ = std::move(field);
  features_ = std::move(z);
  graph_.reset();
  handles_ = {};
  ids_.clear();
  rows_.clear();
  anchors_.clear();
  suppression_.clear();
  lambda_ = 0.0;
  plane_.reset();
  return mutated({{"type", "loaded"}, {"vertices", mesh_->vertices.size()}, {"faces", mesh_->faces.size()}});
}

std::size_t Session::index_of(const Json& m, const char* key) const {
  if (!m.contains(key) || !m[key].is_number_unsigned()) throw InputError(std::string("missing handle '") + key + "'");
  const auto id = m[key].get<std::uint64_t>();
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw InputError("unknown handle id " + std::to_string(id));
  return static_cast<std::size_t>(it - ids_.begin());
}

std::shared_ptr<const std::vector<float>> Session::effective_row(HandleRows& rows, std::uint32_t vertex) {
  if (suppression_.empty() && lambda_ == 0) return rows.raw;
  auto row = std::make_shared<std::vector<float>>(*rows.raw);
  if (!suppression_.empty())
    for (std::size_t i = 0; i < row->size(); ++i) (*row)[i] = std::max((*row)[i] - suppression_[i], 0.f);
  if (lambda_ > 0) {
    if (!rows.geodesic) {
      if (!graph_) graph_ = build_edge_graph(*mesh_);
      rows.geodesic = std::make_shared<const GeodesicRow>(geodesics_from(*graph_, vertex));
    }
    apply_locality_row(*row, *rows.geodesic, lambda_);
  }
  return row;
}

void Session::refresh_effective_rows() {
  for (std::size_t k = 0; k < rows_.size(); ++k)
    rows_[k].effective = effective_row(rows_[k], handles_.handles[k].vertex);
}

Session::Outcome Session::dispatch(const std::string& type, const Json& m) {
  if (type == "load") {
    if (!m.contains("mesh_path") || !m.contains("field_path")) throw InputError("load needs mesh_path and field_path");
    const std::string mesh_path = m["mesh_path"].get<std::string>();
    const std::string field_path = m["field_path"].get<std::string>();
    auto mesh = std::make_shared<Mesh>(load_mesh(mesh_path));
    FeatureField field = load_field(field_path);
    auto out = load(std::move(mesh), std::move(field));
    mesh_path_ = mesh_path;
    field_path_ = field_path;
    return out;
  }
  if (type == "restore") {
    if (!m.contains("path")) throw InputError("restore needs 'path'");
    std::ifstream in(m["path"].get<std::string>() + ".json");
    if (!in) throw InputError("cannot open snapshot state " + m["path"].get<std::string>() + ".json");
    Json state;
    try {
      state = Json::parse(in);
    } catch (const Json::exception& e) {
      throw InputError(std::string("snapshot state is not valid JSON: ") + e.what());
    }
    restore_state(state);
    return mutated({{"type", "restored"}, {"handles", ids_}});
  }

  if (!loaded()) throw InputError("no mesh loaded");
  const std::size_t n = mesh_->vertices.size();

  if (type == "add_handle") {
    const std::uint32_t v = vertex_from_json(m, "vertex", n);
    AffineTransform d;
    if (m.contains("matrix")) d = matrix_from_json(m["matrix"]);
    HandleRows rows;
    auto raw = std::make_shared<std::vector<float>>(n);
    std::vector<float> h(features_.row(v), features_.row(v) + features_.channels);
    bind_row(features_, h.data(), raw->data());
    rows.raw = std::move(raw);
    rows.effective = effective_row(rows, v);
    const std::uint64_t id = next_id_++;
    handles_.handles.push_back({v, d});
    ids_.push_back(id);
    rows_.push_back(std::move(rows));
    const std::uint64_t before = revision_;
    auto out = mutated({{"type", "handle_added"}, {"id", id}, {"vertex", v}});
    // An identity handle (and its mirror) adds exact zeros to every vertex.
    if (mode_ == BlendMode::displacement && is_identity(d) && (!plane_ || is_identity(reflect_transform(*plane_, d))))
      out.pose->same_geometry_as = before;
    return out;
  }
  if (type == "update_handle") {
    const std::size_t k = index_of(m, "id");
    if (!m.contains("matrix")) throw InputError("update_handle needs 'matrix'");
    handles_.handles[k].transform = matrix_from_json(m["matrix"]);
    return mutated({{"type", "ack"}, {"request", type}, {"id", ids_[k]}});
  }
  if (type == "remove_handle") {
    const std::size_t k = index_of(m, "id");
    const auto id = ids_[k];
    handles_.handles.erase(handles_.handles.begin() + static_cast<std::ptrdiff_t>(k));
    ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(k));
    rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(k));
    return mutated({{"type", "ack"}, {"request", type}, {"id", id}});
  }
  if (type == "set_anchors") {
    if (!m.contains("vertices") || !m["vertices"].is_array()) throw InputError("set_anchors needs 'vertices'");
    std::vector<std::uint32_t> anchors;
    for (std::size_t i = 0; i < m["vertices"].size(); ++i)
      anchors.push_back(vertex_from_json(Json{{"v", m["vertices"][i]}}, "v", n));
    suppression_ = anchors.empty() ? std::vector<float>{} : anchor_suppression(features_, anchors);
    anchors_ = std::move(anchors);
    refresh_effective_rows();
    return mutated({{"type", "ack"}, {"request", type}, {"anchors", anchors_}});
  }
  if (type == "set_lambda") {
    if (!m.contains("value") || !m["value"].is_number()) throw InputError("set_lambda needs numeric 'value'");
    const double lambda = m["value"].get<double>();
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
    lambda_ = lambda;
    refresh_effective_rows();
    return mutated({{"type", "ack"}, {"request", type}, {"value", lambda_}});
  }
  if (type == "set_mode") {
    if (!m.contains("mode") || !m["mode"].is_string()) throw InputError("set_mode needs 'mode'");
    mode_ = parse_blend_mode(m["mode"].get<std::string>());
    return mutated({{"type", "ack"}, {"request", type}, {"mode", to_string(mode_)}});
  }
  if (type == "symmetry") {
    const std::string which = m.value("mode", std::string("auto"));
    Json reply = {{"type", "symmetry"}};
    if (which == "off") {
      plane_.reset();
    } else if (which == "auto") {
      const auto planes = detect_axis_symmetries(field_, *mesh_, features_);
      Json list = Json::array();
      std::optional<SymmetryPlane> best;
      for (const auto& p : planes) {
        list.push_back(plane_json(p));
        if (p.accepted && (!best || p.score < best->score)) best = p;
      }
      reply["planes"] = list;
      plane_ = best;
    } else if (which == "plane") {
      SymmetryPlane p = evaluate_plane(field_, *mesh_, features_, plane_from_json(m));
      if (!p.accepted && !m.value("force", false))
        throw InputError("plane rejected (score " + std::to_string(p.score) + "); send force to use it");
      reply["planes"] = Json::array({plane_json(p)});
      plane_ = p;
    } else {
      throw InputError("symmetry mode must be auto, off or plane");
    }
    reply["active"] = plane_ ? plane_json(*plane_) : Json(nullptr);
    return mutated(std::move(reply));
  }
  if (type == "query_weights") {
    const std::size_t k = index_of(m, "handle_id");
    Outcome out;
    out.replies.push_back({{"type", "weights"}, {"handle_id", ids_[k]}, {"rev", revision_}, {"values", *rows_[k].effective}});
    return out;
  }
  if (type == "snapshot") {
    if (!m.contains("path")) throw InputError("snapshot needs 'path'");
    const std::string base = m["path"].get<std::string>();
    const GeometryFrame frame = current_job().run();
    Mesh posed;
    posed.vertices = frame.vertices;
    posed.faces = mesh_->faces;
    save_obj(base + ".obj", posed);
    std::ofstream out(base + ".json");
    if (!out) throw InputError("cannot write " + base + ".json");
    out << state_json().dump(2) << '\n';
    if (!out) throw InputError("failed writing " + base + ".json");
    Outcome o;
    o.replies.push_back({{"type", "snapshot"}, {"obj", base + ".obj"}, {"state", base + ".json"}, {"rev", revision_}});
    return o;
  }
  throw InputError("unknown message type '" + type + "'");
}

Json Session::state_json() const {
  Json handles = Json::array();
  for (std::size_t k = 0; k < ids_.size(); ++k)
    handles.push_back({{"id", ids_[k]}, {"vertex", handles_.handles[k].vertex},
                       {"matrix", handles_.handles[k].transform.to_rows()}});
  return {{"mesh_path", mesh_path_},
          {"field_path", field_path_},
          {"vertices", mesh_->vertices.size()},
          {"handles", handles},
          {"anchors", anchors_},
          {"lambda", lambda_},
          {"mode", to_string(mode_)},
          {"symmetry", plane_ ? plane_json(*plane_) : Json(nullptr)},
          {"revision", revision_}};
}

void Session::restore_state(const Json& state) {
  // Validate everything before touching the session.
  const std::string mesh_path = state.value("mesh_path", std::string());
  const std::string field_path = state.value("field_path", std::string());
  const bool reload = !mesh_path.empty() && (mesh_path != mesh_path_ || field_path != field_path_ || !loaded());
  if (!reload && !loaded()) throw InputError("snapshot has no mesh path and no mesh is loaded");

  std::shared_ptr<const Mesh> mesh = mesh_;
  std::optional<FeatureField> field;
  if (reload) {
    mesh = std::make_shared<Mesh>(load_mesh(mesh_path));
    field = load_field(field_path);
  }
  const std::size_t n = mesh->vertices.size();
  if (state.value("vertices", static_cast<std::size_t>(n)) != n) throw InputError("snapshot vertex count mismatch");

  HandleSet handles;
  std::vector<std::uint64_t> ids;
  for (const auto& h : state.at("handles")) {
    handles.handles.push_back({vertex_from_json(h, "vertex", n), matrix_from_json(h.at("matrix"))});
    ids.push_back(h.at("id").get<std::uint64_t>());
  }
  std::vector<std::uint32_t> anchors;
  for (const auto& a : state.value("anchors", Json::array())) anchors.push_back(vertex_from_json(Json{{"v", a}}, "v", n));
  const double lambda = state.value("lambda", 0.0);
  if (!(lambda >= 0)) throw InputError("snapshot lambda must be >= 0");
  const BlendMode mode = parse_blend_mode(state.value("mode", std::string("displacement")));
  std::optional<SymmetryPlane> plane;
  if (state.contains("symmetry") && !state["symmetry"].is_null()) plane = plane_from_json(state["symmetry"]);

  if (reload) {
    load(mesh, std::move(*field));
    mesh_path_ = mesh_path;
    field_path_ = field_path;
  }
  handles_ = std::move(handles);
  ids_ = std::move(ids);
  next_id_ = 0;
  for (auto id : ids_) next_id_ = std::max(next_id_, id + 1);
  anchors_ = std::move(anchors);
  suppression_ = anchors_.empty() ? std::vector<float>{} : anchor_suppression(features_, anchors_);
  lambda_ = lambda;
  mode_ = mode;
  plane_ = plane;
  rows_.assign(handles_.size(), {});
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    const auto v = handles_.handles[k].vertex;
    auto raw = std::make_shared<std::vector<float>>(n);
    std::vector<float> h(features_.row(v), features_.row(v) + features_.channels);
    bind_row(features_, h.data(), raw->data());
    rows_[k].raw = std::move(raw);
  }
  refresh_effective_rows();
}

SessionRunner::SessionRunner(TextSink on_text, FrameSink on_frame)
    : on_text_(std::move(on_text)), on_frame_(std::move(on_frame)) {
  loop_thread_ = std::thread([this] { loop(); });
  pose_thread_ = std::thread([this] { pose_loop(); });
}

SessionRunner::SessionRunner(TextSink on_text, EncodedFrames on_frame)
    : on_text_(std::move(on_text)), on_encoded_(std::move(on_frame.sink)) {
  loop_thread_ = std::thread([this] { loop(); });
  pose_thread_ = std::thread([this] { pose_loop(); });
}

SessionRunner::~SessionRunner() {
  {
    std::lock_guard lock(inbox_mutex_);
    stopping_ = true;
  }
  inbox_cv_.notify_all();
  loop_thread_.join();
  {
    std::lock_guard lock(pose_mutex_);
  }
  pose_cv_.notify_all();
  pose_thread_.join();
}

void SessionRunner::post(std::string text) {
  {
    std::lock_guard lock(inbox_mutex_);
    inbox_.push_back([this, text = std::move(text)] {
      Session::Outcome out;
      Json message;
      try {
        message = Json::parse(text);
      } catch (const Json::exception& e) {
        on_text_(Json{{"type", "error"}, {"request", "?"}, {"message", std::string("malformed JSON: ") + e.what()},
                      {"rev", session_.revision()}}
                     .dump());
        return;
      }
      out = session_.handle_message(message);
      for (const auto& r : out.replies) on_text_(r.dump());
      if (out.pose) {
        {
          std::lock_guard lock(pose_mutex_);
          if (out.pose->same_geometry_as && pending_ && pending_->revision == *out.pose->same_geometry_as)
            pending_->revision = out.pose->revision;
          else
            pending_ = std::move(out.pose);  // latest wins
        }
        pose_cv_.notify_all();
      }
    });
  }
  inbox_cv_.notify_all();
}

void SessionRunner::with_session(const std::function<void(Session&)>& fn) {
  std::mutex done_mutex;
  std::condition_variable done_cv;
  bool done = false;
  std::exception_ptr error;
  {
    std::lock_guard lock(inbox_mutex_);
    inbox_.push_back([&] {
      try {
        fn(session_);
      } catch (...) {
        error = std::current_exception();
      }
      std::lock_guard l(done_mutex);
      done = true;
      done_cv.notify_all();
    });
  }
  inbox_cv_.notify_all();
  std::unique_lock lock(done_mutex);
  done_cv.wait(lock, [&] { return done; });
  if (error) std::rethrow_exception(error);
}

void SessionRunner::drain() {
  {
    std::unique_lock lock(inbox_mutex_);
    inbox_cv_.wait(lock, [&] { return inbox_.empty() && !loop_busy_; });
  }
  std::unique_lock lock(pose_mutex_);
  pose_cv_.wait(lock, [&] { return !pending_ && !pose_busy_; });
}

void SessionRunner::loop() {
  std::unique_lock lock(inbox_mutex_);
  for (;;) {
    inbox_cv_.wait(lock, [&] { return stopping_ || !inbox_.empty(); });
    if (inbox_.empty() && stopping_) return;
    auto task = std::move(inbox_.front());
    inbox_.erase(inbox_.begin());
    loop_busy_ = true;
    lock.unlock();
    task();
    lock.lock();
    loop_busy_ = false;
    inbox_cv_.notify_all();
  }
}

void SessionRunner::pose_loop() {
  std::unique_lock lock(pose_mutex_);
  for (;;) {
    pose_cv_.wait(lock, [&] { return stopping_ || pending_.has_value(); });
    if (!pending_ && stopping_) return;
    PoseJob job = std::move(*pending_);
    pending_.reset();
    pose_busy_ = true;
    lock.unlock();
    try {
      if (on_encoded_) {
        EncodedFrame frame;
        if (job.same_geometry_as && last_encoded_ && last_revision_ == *job.same_geometry_as) {
          auto copy = std::make_shared<std::string>(*last_encoded_);
          std::memcpy(copy->data(), &job.revision, 8);
          frame = std::move(copy);
        } else {
          last_encoded_.reset();
          frame = std::make_shared<const std::string>(job.run_encoded());
        }
        last_encoded_ = frame;
        last_revision_ = job.revision;
        on_encoded_(std::move(frame));
      } else {
        on_frame_(job.run());
      }
    } catch (const std::exception& e) {
      on_text_(Json{{"type", "error"}, {"request", "pose"}, {"message", e.what()}, {"rev", job.revision}}.dump());
    }
    lock.lock();
    pose_busy_ = false;
    pose_cv_.notify_all();
  }
}

}  // namespace dfd
