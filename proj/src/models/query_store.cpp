#include "querynet/models/query_store.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>

namespace querynet::models {

QueryStore::QueryStore(std::size_t channels, std::size_t height, std::size_t width, int classes)
    : channels_(channels), height_(height), width_(width), classes_(classes) {
  if (classes < 2) throw std::invalid_argument("query store: need at least two classes");
}

void QueryStore::append(const data::ImageBatch& images, const numgrad::Tensor& probs,
                        std::span<const std::size_t> sample_ids, std::size_t iteration) {
  const std::size_t k = static_cast<std::size_t>(classes_);
  if (images.channels() != channels_ || images.height() != height_ || images.width() != width_) {
    throw numgrad::ShapeError("query_store", "image geometry does not match the store");
  }
  if (probs.shape() != numgrad::Shape{images.batch(), k} || sample_ids.size() != images.batch()) {
    throw numgrad::ShapeError("query_store", "probs " + numgrad::shape_string(probs.shape()) + " and " +
                                                 std::to_string(sample_ids.size()) + " ids for " +
                                                 std::to_string(images.batch()) + " images");
  }
  for (std::size_t b = 0; b < images.batch(); ++b) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += probs[b * k + c];
    if (std::abs(total - 1.0) > 1e-4) {
      throw std::invalid_argument("query_store: probability row sums to " + std::to_string(total));
    }
  }
  std::unique_lock lock(mutex_);
  const std::size_t first = sample_ids_.size();
  images_.insert(images_.end(), images.values().begin(), images.values().end());
  probs_.insert(probs_.end(), probs.values().begin(), probs.values().end());
  for (std::size_t b = 0; b < images.batch(); ++b) {
    const std::size_t id = sample_ids[b];
    sample_ids_.push_back(id);
    iterations_.push_back(iteration);
    if (by_sample_.size() <= id) by_sample_.resize(id + 1);
    by_sample_[id].push_back(first + b);
  }
}

std::size_t QueryStore::size() const {
  std::shared_lock lock(mutex_);
  return sample_ids_.size();
}

data::ImageBatch QueryStore::images(std::span<const std::size_t> rows) const {
  std::shared_lock lock(mutex_);
  const std::size_t d = sample_size();
  std::vector<float> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= sample_ids_.size()) throw std::out_of_range("query_store: row out of range");
    std::copy_n(images_.begin() + static_cast<std::ptrdiff_t>(r * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return data::ImageBatch::from_values(rows.size(), channels_, height_, width_, std::move(out), false);
}

numgrad::Tensor QueryStore::probs(std::span<const std::size_t> rows) const {
  std::shared_lock lock(mutex_);
  const std::size_t k = static_cast<std::size_t>(classes_);
  numgrad::Tensor out(numgrad::Shape{rows.size(), k});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= sample_ids_.size()) throw std::out_of_range("query_store: row out of range");
    std::copy_n(probs_.begin() + static_cast<std::ptrdiff_t>(r * k), k, out.data() + i * k);
  }
  return out;
}

std::vector<float> QueryStore::probs_row(std::size_t row) const {
  std::shared_lock lock(mutex_);
  const std::size_t k = static_cast<std::size_t>(classes_);
  if (row >= sample_ids_.size()) throw std::out_of_range("query_store: row out of range");
  return {probs_.begin() + static_cast<std::ptrdiff_t>(row * k), probs_.begin() + static_cast<std::ptrdiff_t>((row + 1) * k)};
}

std::vector<float> QueryStore::image_row(std::size_t row) const {
  std::shared_lock lock(mutex_);
  const std::size_t d = sample_size();
  if (row >= sample_ids_.size()) throw std::out_of_range("query_store: row out of range");
  return {images_.begin() + static_cast<std::ptrdiff_t>(row * d), images_.begin() + static_cast<std::ptrdiff_t>((row + 1) * d)};
}

std::size_t QueryStore::sample_of(std::size_t row) const {
  std::shared_lock lock(mutex_);
  return sample_ids_.at(row);
}

std::size_t QueryStore::iteration_of(std::size_t row) const {
  std::shared_lock lock(mutex_);
  return iterations_.at(row);
}

std::vector<std::size_t> QueryStore::rows_for_sample(std::size_t sample) const {
  std::shared_lock lock(mutex_);
  if (sample >= by_sample_.size()) return {};
  return by_sample_[sample];
}

}  // namespace querynet::models
