#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "querynet/numgrad/tensor.hpp"

namespace querynet::data {

enum class Norm { kLinf, kL2 };

std::string_view to_string(Norm norm);
Norm parse_norm(std::string_view text);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (B, C, H, W) images with pixels in [0, 1].
///
/// `eight_bit()` asserts every pixel lies on the k/255 grid. Writes through
/// mutable_values() clear the flag; quantize_8bit() sets it again.
class ImageBatch {
 public:
  ImageBatch() = default;
  ImageBatch(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width);

  /// Validates the value range and, if `eight_bit`, the 8-bit grid.
  static ImageBatch from_values(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
                                std::vector<float> values, bool eight_bit);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t sample_size() const noexcept { return channels_ * height_ * width_; }
  bool empty() const noexcept { return batch_ == 0; }
  bool eight_bit() const noexcept { return eight_bit_; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<float> mutable_values() noexcept {
    eight_bit_ = false;
    return values_;
  }
  std::span<const float> sample(std::size_t k) const;
  std::span<float> mutable_sample(std::size_t k);

  /// (B, C, H, W) tensor copy for the autodiff engine.
  numgrad::Tensor tensor() const;

  ImageBatch gather(std::span<const std::size_t> rows) const;
  /// Overwrites row `k` with row `src_row` of `src`; keeps the flag only if both are 8-bit.
  void assign_sample(std::size_t k, const ImageBatch& src, std::size_t src_row);

  bool same_geometry(const ImageBatch& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const ImageBatch& other) const = default;

  /// Re-checks range and grid invariants; throws DataError on violation.
  void validate() const;

 private:
  friend ImageBatch quantize_8bit(const ImageBatch& x);

  std::size_t batch_ = 0, channels_ = 0, height_ = 0, width_ = 0;
  std::vector<float> values_;
  bool eight_bit_ = false;
};

/// Images plus class indices in [0, classes).
struct LabeledSet {
  ImageBatch images;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  LabeledSet subset(std::span<const std::size_t> rows) const;
};

/// round_half_away_from_zero(v·255)/255 clamped to [0,1]. Idempotent.
ImageBatch quantize_8bit(const ImageBatch& x);

bool on_8bit_grid(float v);

/// Projects candidates onto the eps-ball around x_org, then onto [0,1].
/// linf clamps each offset; l2 rescales a row only when its norm exceeds eps.
ImageBatch project(const ImageBatch& x_cand, const ImageBatch& x_org, Norm norm, float eps);

/// ‖x_k − x_org,k‖_p per row.
std::vector<double> perturbation_norms(const ImageBatch& x, const ImageBatch& x_org, Norm norm);

/// Largest perturbation norm a quantized projected query may have: the
/// ball radius plus the worst-case rounding of every pixel by 0.5/255.
double quantized_bound(Norm norm, float eps, std::size_t sample_size);

}  // namespace querynet::data
