#include "querynet/remote/protocol.hpp"

#include <cmath>

#include "json.hpp"

namespace querynet::remote {
namespace {

using nlohmann::json;

ProtocolError bad(const std::string& code, const std::string& detail) { return ProtocolError(400, code, detail); }

json parse_object(const std::string& body, const char* what) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw bad(codes::kMalformedJson, std::string(what) + ": " + e.what());
  }
  if (!doc.is_object()) throw bad(codes::kMalformedJson, std::string(what) + ": body must be a JSON object");
  return doc;
}

}  // namespace

std::string encode_request(const PredictRequest& request) {
  json doc = {{"shape", request.shape}, {"pixels", request.pixels}};
  if (!request.request_id.empty()) doc["request_id"] = request.request_id;
  return doc.dump();
}

PredictRequest decode_request(const std::string& body) {
  const json doc = parse_object(body, "predict request");
  if (!doc.contains("shape") || !doc["shape"].is_array()) throw bad(codes::kMalformedJson, "missing array 'shape'");
  if (!doc.contains("pixels") || !doc["pixels"].is_array()) throw bad(codes::kMalformedJson, "missing array 'pixels'");
  PredictRequest request;
  for (const auto& extent : doc["shape"]) {
    if (!extent.is_number_unsigned() || extent.get<std::size_t>() == 0) {
      throw bad(codes::kShapeMismatch, "shape entries must be positive integers");
    }
    request.shape.push_back(extent.get<std::size_t>());
  }
  if (request.shape.size() != 4) throw bad(codes::kShapeMismatch, "shape must be [B, C, H, W]");
  const std::size_t expected = request.shape[0] * request.shape[1] * request.shape[2] * request.shape[3];
  const auto& pixels = doc["pixels"];
  if (pixels.size() != expected) {
    throw bad(codes::kShapeMismatch,
              "shape implies " + std::to_string(expected) + " pixels, got " + std::to_string(pixels.size()));
  }
  request.pixels.reserve(expected);
  for (const auto& p : pixels) {
    if (!p.is_number_integer()) throw bad(codes::kPixelOutOfRange, "pixels must be integers in [0, 255]");
    const auto v = p.get<std::int64_t>();
    if (v < 0 || v > 255) throw bad(codes::kPixelOutOfRange, "pixel value " + std::to_string(v) + " outside [0, 255]");
    request.pixels.push_back(static_cast<int>(v));
  }
  if (doc.contains("request_id")) {
    if (!doc["request_id"].is_string()) throw bad(codes::kMalformedJson, "'request_id' must be a string");
    request.request_id = doc["request_id"].get<std::string>();
  }
  return request;
}

std::string encode_response(const PredictResponse& response) {
  const std::size_t rows = response.probs.dim(0), k = response.probs.dim(1);
  json probs = json::array();
  for (std::size_t b = 0; b < rows; ++b) {
    json row = json::array();
    for (std::size_t j = 0; j < k; ++j) row.push_back(response.probs[b * k + j]);
    probs.push_back(std::move(row));
  }
  return json{{"probs", std::move(probs)}, {"total_queries", response.total_queries}}.dump();
}

PredictResponse decode_response(const std::string& body) {
  const json doc = parse_object(body, "predict response");
  if (!doc.contains("probs") || !doc["probs"].is_array() || doc["probs"].empty()) {
    throw bad(codes::kMalformedJson, "response lacks 'probs'");
  }
  const auto& rows = doc["probs"];
  const std::size_t k = rows.front().size();
  std::vector<float> values;
  values.reserve(rows.size() * k);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != k) throw bad(codes::kMalformedJson, "ragged 'probs'");
    for (const auto& v : row) values.push_back(v.get<float>());
  }
  PredictResponse response;
  response.probs = numgrad::Tensor({rows.size(), k}, std::move(values));
  response.total_queries = doc.value("total_queries", std::size_t{0});
  return response;
}

std::string encode_info(const ServerInfo& info) {
  return json{{"classes", info.classes},
              {"input_shape", info.input_shape},
              {"total_queries", info.total_queries},
              {"max_batch", info.max_batch}}
      .dump();
}

ServerInfo decode_info(const std::string& body) {
  const json doc = parse_object(body, "info");
  ServerInfo info;
  try {
    info.classes = doc.at("classes").get<int>();
    info.input_shape = doc.at("input_shape").get<std::vector<std::size_t>>();
    info.total_queries = doc.at("total_queries").get<std::size_t>();
    info.max_batch = doc.at("max_batch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw bad(codes::kMalformedJson, std::string("info: ") + e.what());
  }
  return info;
}

std::string encode_error(const std::string& code, const std::string& detail) {
  return json{{"error", code}, {"detail", detail}}.dump();
}

PredictRequest to_request(const data::ImageBatch& images) {
  const auto q = data::quantize_8bit(images);
  PredictRequest request;
  request.shape = {q.batch(), q.channels(), q.height(), q.width()};
  request.pixels.reserve(q.values().size());
  for (float v : q.values()) request.pixels.push_back(static_cast<int>(std::lround(v * 255.0f)));
  return request;
}

data::ImageBatch to_images(const PredictRequest& request) {
  std::vector<float> values(request.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(request.pixels[i]) / 255.0f;
  return data::ImageBatch::from_values(request.shape.at(0), request.shape.at(1), request.shape.at(2),
                                       request.shape.at(3), std::move(values), true);
}

}  // namespace querynet::remote
