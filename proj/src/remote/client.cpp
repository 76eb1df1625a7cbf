#include "querynet/remote/client.hpp"

#include <chrono>
#include <random>
#include <thread>

#include "httplib.h"

namespace querynet::remote {
namespace {

std::string strip_scheme(const std::string& endpoint) {
  const std::string scheme = "http://";
  std::string rest = endpoint.rfind(scheme, 0) == 0 ? endpoint.substr(scheme.size()) : endpoint;
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  return rest;
}

}  // namespace

RemoteOracle::RemoteOracle(const std::string& endpoint, ClientOptions options)
    : options_(options), client_tag_(std::random_device{}()) {
  const std::string host_port = strip_scheme(endpoint);
  const auto colon = host_port.rfind(':');
  if (colon == std::string::npos) throw core::OracleError("remote oracle: endpoint needs host:port, got " + endpoint);
  int port = 0;
  try {
    port = std::stoi(host_port.substr(colon + 1));
  } catch (const std::exception&) {
    throw core::OracleError("remote oracle: bad port in " + endpoint);
  }
  http_ = std::make_unique<httplib::Client>(host_port.substr(0, colon), port);
  http_->set_connection_timeout(options_.timeout_seconds, 0);
  http_->set_read_timeout(options_.timeout_seconds, 0);
  http_->set_write_timeout(options_.timeout_seconds, 0);
  info_ = info();
}

RemoteOracle::~RemoteOracle() = default;

ServerInfo RemoteOracle::info() {
  for (int attempt = 0;; ++attempt) {
    auto res = http_->Get("/info");
    if (res) {
      if (res->status != 200) throw core::OracleError("remote oracle: /info returned " + std::to_string(res->status));
      try {
        return decode_info(res->body);
      } catch (const ProtocolError& e) {
        throw core::OracleError(std::string("remote oracle: ") + e.what());
      }
    }
    if (attempt >= options_.retries) {
      throw core::OracleError("remote oracle: /info unreachable: " + httplib::to_string(res.error()));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms * (attempt + 1)));
  }
}

std::string RemoteOracle::next_request_id() {
  return std::to_string(client_tag_) + "-" + std::to_string(sequence_.fetch_add(1));
}

numgrad::Tensor RemoteOracle::query(const data::ImageBatch& x) {
  PredictRequest request = to_request(x);
  request.request_id = next_request_id();
  const std::string body = encode_request(request);
  for (int attempt = 0;; ++attempt) {
    auto res = http_->Post("/predict", body, "application/json");
    if (res) {
      if (res->status != 200) {
        throw core::OracleError("remote oracle: /predict returned " + std::to_string(res->status) + " " + res->body);
      }
      PredictResponse response;
      try {
        response = decode_response(res->body);
      } catch (const std::exception& e) {
        throw core::OracleError(std::string("remote oracle: bad response: ") + e.what());
      }
      if (response.probs.rank() != 2 || response.probs.dim(0) != x.batch()) {
        throw core::OracleError("remote oracle: response rows do not match the batch");
      }
      total_ += x.batch();
      return std::move(response.probs);
    }
    if (attempt >= options_.retries) {
      throw core::OracleError("remote oracle: /predict failed after " + std::to_string(attempt + 1) +
                              " attempts: " + httplib::to_string(res.error()));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms * (attempt + 1)));
  }
}

}  // namespace querynet::remote
