#pragma once
// Immutable engine bundle (catalog + model + graph) and a minimal TCP server
// speaking newline-delimited JSON, one response line per request line.

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mqr/eval.hpp"

namespace mqr {

struct EnginePaths {
  std::string catalog;
  std::string checkpoint;  // URMM v2 bundle
  std::string graph;
  std::string objective_registry;  // optional
};

struct EngineBundle {
  CandidateCatalog catalog;
  Model model;
  NeighborGraph graph;
  ObjectiveRegistry registry;
  SamplerConfig base_cfg;
  MatF rows;  // effective rows for base_cfg.mode

  static EngineBundle load(const EnginePaths& paths, const SamplerConfig& base);
};

// Request: {"history": [..], "objective": "..", "query": "..", "k": n, "seed": s}
// Response: {"items": [..], "scores": [..]} plus "warning" on unknown tags,
// or {"error": ".."} for malformed requests (connection stays open).
std::string handle_request_line(const EngineBundle& bundle, const std::string& line);

class LineServer {
 public:
  explicit LineServer(const EngineBundle& bundle) : bundle_(bundle) {}
  ~LineServer();

  // Binds and starts the accept loop; port 0 picks an ephemeral port.
  void start(std::uint16_t port);
  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  const EngineBundle& bundle_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

}  // namespace mqr
