#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dfd/deform.hpp"
#include "dfd/field.hpp"
#include "dfd/symmetry.hpp"
#include "dfd/weights.hpp"

namespace dfd {

using Json = nlohmann::json;

// Deformed geometry stamped with the revision of the state it reflects.
// Wire form: u64 revision, u64 n, 3n float32, little-endian.
struct GeometryFrame {
  std::uint64_t revision = 0;
  std::vector<Vec3f> vertices;

  std::string encode() const;
  static GeometryFrame decode(const std::string& bytes);
};

// Everything a pose needs, immutable once built, so a worker can evaluate
// it while the message loop keeps mutating the session.
struct PoseJob {
  std::uint64_t revision = 0;
  std::shared_ptr<const Mesh> mesh;
  std::vector<std::shared_ptr<const std::vector<float>>> rows;
  HandleSet handles;
  BlendMode mode = BlendMode::displacement;
  std::optional<SymmetryPlane> plane;
  // Revision whose geometry this job reproduces bit for bit, when the
  // session knows it (an identity handle added in displacement mode). A
  // worker still holding that frame may re-stamp it instead of posing.
  std::optional<std::uint64_t> same_geometry_as;

  GeometryFrame run() const;
  // Same pose, written directly into GeometryFrame wire form.
  std::string run_encoded() const;
};

// Interactive editing state. Single-threaded: one message loop owns it.
// Weight rows change only on add_handle, set_anchors and set_lambda;
// transform updates never rebind.
class Session {
 public:
  struct Outcome {
    std::vector<Json> replies;
    std::optional<PoseJob> pose;  // set when the geometry may have changed
  };

  Outcome handle_message(const Json& message);

  // Direct load, bypassing file I/O (tests, in-process clients).
  Outcome load(std::shared_ptr<const Mesh> mesh, FeatureField field);

  bool loaded() const { return mesh_ != nullptr; }
  std::uint64_t revision() const { return revision_; }
  const HandleSet& handles() const { return handles_; }
  std::vector<std::uint64_t> handle_ids() const { return ids_; }
  PoseJob current_job() const;

 private:
  struct HandleRows {
    std::shared_ptr<const std::vector<float>> raw;        // bound row, before anchors/locality
    std::shared_ptr<const std::vector<float>> effective;  // what pose uses
    std::shared_ptr<const GeodesicRow> geodesic;          // cached once lambda > 0
  };

  Outcome dispatch(const std::string& type, const Json& m);
  Outcome mutated(Json reply);
  std::size_t index_of(const Json& m, const char* key) const;
  std::shared_ptr<const std::vector<float>> effective_row(HandleRows& rows, std::uint32_t vertex);
  void refresh_effective_rows();
  Json state_json() const;
  void restore_state(const Json& state);

  std::shared_ptr<const Mesh> mesh_;
  FeatureField field_;
  VertexFeatures features_;
  std::optional<EdgeGraph> graph_;
  std::string mesh_path_, field_path_;

  HandleSet handles_;
  std::vector<std::uint64_t> ids_;
  std::vector<HandleRows> rows_;
  std::uint64_t next_id_ = 0;
  std::vector<std::uint32_t> anchors_;
  std::vector<float> suppression_;
  double lambda_ = 0.0;
  BlendMode mode_ = BlendMode::displacement;
  std::optional<SymmetryPlane> plane_;
  std::uint64_t revision_ = 0;
};

// Runs a Session behind a message loop and a separate pose worker. The
// worker's mailbox keeps only the newest pending job, so a burst of
// updates during one pose collapses into the last one.
class SessionRunner {
 public:
  using TextSink = std::function<void(const std::string&)>;
  using FrameSink = std::function<void(const GeometryFrame&)>;
  // Frames already in wire form, for transports: skips one full copy of
  // the vertex buffer per frame. Frames are shared and never modified
  // after delivery.
  using EncodedFrame = std::shared_ptr<const std::string>;
  struct EncodedFrames {
    std::function<void(EncodedFrame)> sink;
  };

  SessionRunner(TextSink on_text, FrameSink on_frame);
  SessionRunner(TextSink on_text, EncodedFrames on_frame);
  ~SessionRunner();
  SessionRunner(const SessionRunner&) = delete;
  SessionRunner& operator=(const SessionRunner&) = delete;

  // Thread-safe; messages are applied in arrival order.
  void post(std::string text);
  void post(const Json& message) { post(message.dump()); }

  // In-process access, executed on the message loop.
  void with_session(const std::function<void(Session&)>& fn);

  // Blocks until every posted message is applied and the pose mailbox is
  // empty and idle.
  void drain();

 private:
  void loop();
  void pose_loop();

  TextSink on_text_;
  FrameSink on_frame_;
  std::function<void(EncodedFrame)> on_encoded_;
  Session session_;

  std::mutex inbox_mutex_;
  std::condition_variable inbox_cv_;
  std::vector<std::function<void()>> inbox_;
  bool loop_busy_ = false;

  std::mutex pose_mutex_;
  std::condition_variable pose_cv_;
  std::optional<PoseJob> pending_;
  bool pose_busy_ = false;
  // Pose thread only: the last frame delivered, for re-stamping.
  EncodedFrame last_encoded_;
  std::uint64_t last_revision_ = 0;

  std::atomic<bool> stopping_{false};
  std::thread loop_thread_;
  std::thread pose_thread_;
};

}  // namespace dfd
