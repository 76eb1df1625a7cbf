#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "querynet/data/image_batch.hpp"
#include "querynet/numgrad/tensor.hpp"

namespace querynet::remote {

/// Machine-readable error codes returned in {"error": code, "detail": text}.
namespace codes {
inline constexpr const char* kMalformedJson = "malformed_json";
inline constexpr const char* kShapeMismatch = "shape_mismatch";
inline constexpr const char* kPixelOutOfRange = "pixel_out_of_range";
inline constexpr const char* kBatchTooLarge = "batch_too_large";
}  // namespace codes

struct PredictRequest {
  std::vector<std::size_t> shape;
  std::vector<int> pixels;
  /// Client-chosen id; a repeated id is answered from cache and not recounted.
  std::string request_id;
};

struct PredictResponse {
  numgrad::Tensor probs;
  std::size_t total_queries = 0;
};

struct ServerInfo {
  int classes = 0;
  std::vector<std::size_t> input_shape;
  std::size_t total_queries = 0;
  std::size_t max_batch = 0;
};

/// Error with an HTTP status and one of the codes above.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(int status, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

std::string encode_request(const PredictRequest& request);
/// Throws ProtocolError(400, malformed_json | shape_mismatch | pixel_out_of_range).
PredictRequest decode_request(const std::string& body);

std::string encode_response(const PredictResponse& response);
PredictResponse decode_response(const std::string& body);

std::string encode_info(const ServerInfo& info);
ServerInfo decode_info(const std::string& body);

std::string encode_error(const std::string& code, const std::string& detail);

/// 8-bit images to wire pixels (v·255 rounded) and back.
PredictRequest to_request(const data::ImageBatch& images);
data::ImageBatch to_images(const PredictRequest& request);

}  // namespace querynet::remote
