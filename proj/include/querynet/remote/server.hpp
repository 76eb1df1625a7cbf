#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "querynet/models/victim.hpp"
#include "querynet/remote/protocol.hpp"

namespace httplib {
class Server;
}

namespace querynet::remote {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 0;
  std::size_t max_batch = 1024;
  /// Responses remembered for repeated request ids.
  std::size_t replay_cache = 256;
};

/// HTTP front for a victim: POST /predict and GET /info, nothing else.
class VictimServer {
 public:
  VictimServer(const models::VictimModel& victim, ServerOptions options);
  ~VictimServer();
  VictimServer(const VictimServer&) = delete;
  VictimServer& operator=(const VictimServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

  int port() const noexcept { return port_; }
  std::size_t total_queries() const noexcept { return total_.load(); }

  /// Handlers without the transport, for tests. Return (status, body).
  std::pair<int, std::string> handle_predict(const std::string& body);
  std::pair<int, std::string> handle_info() const;

  /// The exact set of routes registered on the HTTP server.
  static std::vector<std::string> routes();

 private:
  void bind();

  const models::VictimModel& victim_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> total_{0};
  std::mutex replay_mutex_;
  std::unordered_map<std::string, std::string> replay_;
  std::deque<std::string> replay_order_;
};

}  // namespace querynet::remote
