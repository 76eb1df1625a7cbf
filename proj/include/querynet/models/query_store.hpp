#pragma once

#include <cstddef>
#include <shared_mutex>
#include <span>
#include <vector>

#include "querynet/data/image_batch.hpp"
#include "querynet/numgrad/tensor.hpp"

namespace querynet::models {

/// Append-only log of victim query pairs.
///
/// Records are never modified after append. Readers take a shared lock and
/// receive copies, so concurrent reads are safe next to a single appender.
class QueryStore {
 public:
  QueryStore(std::size_t channels, std::size_t height, std::size_t width, int classes);

  /// Appends one record per row. `probs` is (B, K); rows must sum to 1 ± 1e-4.
  void append(const data::ImageBatch& images, const numgrad::Tensor& probs, std::span<const std::size_t> sample_ids,
              std::size_t iteration);

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  int classes() const noexcept { return classes_; }
  std::size_t sample_size() const noexcept { return channels_ * height_ * width_; }

  data::ImageBatch images(std::span<const std::size_t> rows) const;
  numgrad::Tensor probs(std::span<const std::size_t> rows) const;
  std::vector<float> probs_row(std::size_t row) const;
  std::vector<float> image_row(std::size_t row) const;
  std::size_t sample_of(std::size_t row) const;
  std::size_t iteration_of(std::size_t row) const;
  /// Row indices of every record made for original sample `sample`, in append order.
  std::vector<std::size_t> rows_for_sample(std::size_t sample) const;

 private:
  std::size_t channels_, height_, width_;
  int classes_;
  mutable std::shared_mutex mutex_;
  std::vector<float> images_;
  std::vector<float> probs_;
  std::vector<std::size_t> sample_ids_;
  std::vector<std::size_t> iterations_;
  std::vector<std::vector<std::size_t>> by_sample_;
};

}  // namespace querynet::models
