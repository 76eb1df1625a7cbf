#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "querynet/core/oracle.hpp"
#include "querynet/remote/protocol.hpp"

namespace httplib {
class Client;
}

namespace querynet::remote {

struct ClientOptions {
  /// Extra attempts after a transport failure.
  int retries = 3;
  int timeout_seconds = 30;
  int backoff_ms = 50;
};

/// Victim oracle over HTTP.
///
/// Every request carries an id, so a retry after a lost response is served
/// from the server's replay cache and counted once on both sides.
class RemoteOracle final : public core::VictimOracle {
 public:
  /// `endpoint` is "http://host:port" or "host:port". Fetches /info; throws
  /// core::OracleError if the server cannot be reached.
  explicit RemoteOracle(const std::string& endpoint, ClientOptions options = {});
  ~RemoteOracle() override;

  int classes() const override { return info_.classes; }
  numgrad::Tensor query(const data::ImageBatch& x) override;
  std::size_t total_queries() const override { return total_.load(); }

  /// Fresh /info from the server.
  ServerInfo info();

 private:
  std::string next_request_id();

  std::unique_ptr<httplib::Client> http_;
  ClientOptions options_;
  ServerInfo info_;
  std::atomic<std::size_t> total_{0};
  std::uint64_t client_tag_;
  std::atomic<std::uint64_t> sequence_{0};
};

}  // namespace querynet::remote
