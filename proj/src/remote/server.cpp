#include "querynet/remote/server.hpp"

#include <stdexcept>

#include "httplib.h"

namespace querynet::remote {

VictimServer::VictimServer(const models::VictimModel& victim, ServerOptions options)
    : victim_(victim), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  if (options_.max_batch == 0) throw std::invalid_argument("server: max_batch must be positive");
  http_->Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
    auto [status, body] = handle_predict(req.body);
    res.status = status;
    res.set_content(body, "application/json");
  });
  http_->Get("/info", [this](const httplib::Request&, httplib::Response& res) {
    auto [status, body] = handle_info();
    res.status = status;
    res.set_content(body, "application/json");
  });
}

VictimServer::~VictimServer() { stop(); }

std::vector<std::string> VictimServer::routes() { return {"GET /info", "POST /predict"}; }

std::pair<int, std::string> VictimServer::handle_predict(const std::string& body) {
  try {
    PredictRequest request = decode_request(body);
    const auto& arch = victim_.arch();
    if (request.shape[1] != arch.channels || request.shape[2] != arch.height || request.shape[3] != arch.width) {
      throw ProtocolError(400, codes::kShapeMismatch,
                          "victim expects (B," + std::to_string(arch.channels) + "," + std::to_string(arch.height) +
                              "," + std::to_string(arch.width) + ")");
    }
    if (request.shape[0] > options_.max_batch) {
      throw ProtocolError(413, codes::kBatchTooLarge,
                          "batch " + std::to_string(request.shape[0]) + " exceeds " +
                              std::to_string(options_.max_batch));
    }
    if (!request.request_id.empty()) {
      std::lock_guard lock(replay_mutex_);
      if (auto it = replay_.find(request.request_id); it != replay_.end()) return {200, it->second};
    }
    PredictResponse response;
    response.probs = victim_.predict(to_images(request));
    response.total_queries = total_.fetch_add(request.shape[0]) + request.shape[0];
    std::string encoded = encode_response(response);
    if (!request.request_id.empty() && options_.replay_cache > 0) {
      std::lock_guard lock(replay_mutex_);
      replay_.emplace(request.request_id, encoded);
      replay_order_.push_back(request.request_id);
      while (replay_order_.size() > options_.replay_cache) {
        replay_.erase(replay_order_.front());
        replay_order_.pop_front();
      }
    }
    return {200, std::move(encoded)};
  } catch (const ProtocolError& e) {
    const std::string text = e.what();
    return {e.status(), encode_error(e.code(), text.substr(e.code().size() + 2))};
  } catch (const data::DataError& e) {
    return {400, encode_error(codes::kPixelOutOfRange, e.what())};
  }
}

std::pair<int, std::string> VictimServer::handle_info() const {
  const auto& arch = victim_.arch();
  ServerInfo info{arch.classes, {arch.channels, arch.height, arch.width}, total_.load(), options_.max_batch};
  return {200, encode_info(info)};
}

void VictimServer::bind() {
  if (options_.port == 0) {
    port_ = http_->bind_to_any_port(options_.host);
  } else {
    port_ = http_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("server: cannot bind " + options_.host + ":" + std::to_string(options_.port));
}

int VictimServer::start() {
  bind();
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

void VictimServer::run() {
  bind();
  http_->listen_after_bind();
}

void VictimServer::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace querynet::remote
