#include "mqr/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "json.hpp"

using json = nlohmann::json;

namespace mqr {

EngineBundle EngineBundle::load(const EnginePaths& paths, const SamplerConfig& base) {
  EngineBundle b;
  b.catalog = load_catalog(paths.catalog);
  b.model = load_model(paths.checkpoint);
  b.model.mapping.attach_text_features(b.catalog);
  b.graph = load_graph(paths.graph);
  if (!paths.objective_registry.empty())
    b.registry = load_objective_registry(paths.objective_registry);
  b.base_cfg = base;
  b.base_cfg.validate();

  if (b.graph.n != b.catalog.n_items)
    throw std::runtime_error("bundle: graph has " + std::to_string(b.graph.n) +
                             " items, catalog has " + std::to_string(b.catalog.n_items));
  if (b.model.mapping.n_items() != b.catalog.n_items)
    throw std::runtime_error("bundle: checkpoint item count does not match catalog");
  if (b.model.fg.item_embed.rows != b.catalog.n_items)
    throw std::runtime_error("bundle: feature generator table does not match catalog");
  b.rows = effective_rows(b.model.mapping, b.base_cfg.mode);
  return b;
}

std::string handle_request_line(const EngineBundle& bundle, const std::string& line) {
  json resp;
  try {
    const json req = json::parse(line);
    std::vector<ItemId> history;
    if (req.contains("history")) {
      for (const auto& v : req["history"]) {
        const auto id = v.get<std::int64_t>();
        if (id < 0 || !bundle.catalog.valid_id(static_cast<ItemId>(id)))
          throw std::runtime_error("history id " + std::to_string(id) +
                                   " not in catalog");
        history.push_back(static_cast<ItemId>(id));
      }
    }
    const std::string objective = req.value("objective", std::string());
    const auto k = req.value("k", static_cast<std::int64_t>(bundle.base_cfg.k));
    if (k < 1) throw std::runtime_error("k must be >= 1");
    const auto seed = req.value("seed", static_cast<std::int64_t>(0));

    const int tag_idx = bundle.model.fg.tag_index(objective);
    SamplerConfig cfg = bundle.base_cfg;
    cfg.k = static_cast<std::uint32_t>(k);
    cfg.init_subset = bundle.base_cfg.init_subset;  // 0 keeps the 10*k rule
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();

    const QueryBlock queries = bundle.model.fg.make_queries(history, tag_idx);
    const auto result =
        retrieve_cached(bundle.model.mapping, bundle.rows, queries, bundle.graph, cfg);

    json items = json::array(), scores = json::array();
    for (const auto& it : result) {
      items.push_back(it.id);
      scores.push_back(it.score);
    }
    resp["items"] = std::move(items);
    resp["scores"] = std::move(scores);
    if (tag_idx < 0)
      resp["warning"] = "unknown objective tag '" + objective +
                        "', using default embedding";
  } catch (const std::exception& e) {
    resp = json{{"error", e.what()}};
  }
  return resp.dump();
}

LineServer::~LineServer() { stop(); }

void LineServer::start(std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("bind() failed on port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("listen() failed");
  }
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void LineServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard<std::mutex> lock(mu_);
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void LineServer::serve_connection(int fd) {
  std::string pending;
  char buf[4096];
  while (running_) {
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    pending.append(buf, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string out = handle_request_line(bundle_, line) + "\n";
      std::size_t sent = 0;
      while (sent < out.size()) {
        const ssize_t w = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (w <= 0) return;
        sent += static_cast<std::size_t>(w);
      }
    }
  }
}

void LineServer::stop() {
  if (!running_.exchange(false)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard<std::mutex> lock(mu_);
  for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  for (int fd : client_fds_) ::close(fd);
  client_fds_.clear();
  workers_.clear();
}

}  // namespace mqr
