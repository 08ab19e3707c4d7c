#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace dfd {

// WebSocket front end for the edit session: one Session per connection,
// JSON control messages as text frames, geometry as binary frames. If a
// mesh and field are given, each new connection starts with them loaded.
class EditServer {
 public:
  EditServer(const std::string& address, std::uint16_t port, std::string mesh_path = {},
             std::string field_path = {});
  ~EditServer();

  // The bound port (useful when constructed with port 0).
  std::uint16_t port() const;

  // Serves until stop() or SIGINT/SIGTERM when handle_signals is set.
  void run(bool handle_signals = false);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dfd
