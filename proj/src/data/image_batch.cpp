#include "querynet/data/image_batch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace querynet::data {

std::string_view to_string(Norm norm) { return norm == Norm::kLinf ? "linf" : "l2"; }

Norm parse_norm(std::string_view text) {
  if (text == "linf") return Norm::kLinf;
  if (text == "l2") return Norm::kL2;
  throw DataError("unknown norm '" + std::string(text) + "' (expected linf or l2)");
}

ImageBatch::ImageBatch(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width)
    : batch_(batch), channels_(channels), height_(height), width_(width),
      values_(batch * channels * height * width, 0.0f), eight_bit_(true) {}

ImageBatch ImageBatch::from_values(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
                                   std::vector<float> values, bool eight_bit) {
  if (values.size() != batch * channels * height * width) {
    throw DataError("image batch: expected " + std::to_string(batch * channels * height * width) +
                    " pixels, got " + std::to_string(values.size()));
  }
  ImageBatch out;
  out.batch_ = batch;
  out.channels_ = channels;
  out.height_ = height;
  out.width_ = width;
  out.values_ = std::move(values);
  out.eight_bit_ = eight_bit;
  out.validate();
  return out;
}

std::span<const float> ImageBatch::sample(std::size_t k) const {
  if (k >= batch_) throw std::out_of_range("image batch: row out of range");
  return std::span<const float>(values_).subspan(k * sample_size(), sample_size());
}

std::span<float> ImageBatch::mutable_sample(std::size_t k) {
  if (k >= batch_) throw std::out_of_range("image batch: row out of range");
  eight_bit_ = false;
  return std::span<float>(values_).subspan(k * sample_size(), sample_size());
}

numgrad::Tensor ImageBatch::tensor() const {
  numgrad::Tensor t(numgrad::Shape{batch_, channels_, height_, width_});
  std::copy(values_.begin(), values_.end(), t.data());
  return t;
}

ImageBatch ImageBatch::gather(std::span<const std::size_t> rows) const {
  ImageBatch out(rows.size(), channels_, height_, width_);
  const std::size_t d = sample_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = sample(rows[i]);
    std::copy(src.begin(), src.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  out.eight_bit_ = eight_bit_;
  return out;
}

void ImageBatch::assign_sample(std::size_t k, const ImageBatch& src, std::size_t src_row) {
  if (!same_geometry(src)) throw DataError("image batch: geometry mismatch in assign_sample");
  auto from = src.sample(src_row);
  const bool keep = eight_bit_ && src.eight_bit_;
  auto to = mutable_sample(k);
  std::copy(from.begin(), from.end(), to.begin());
  eight_bit_ = keep;
}

bool on_8bit_grid(float v) {
  const double scaled = static_cast<double>(v) * 255.0;
  return std::abs(scaled - std::round(scaled)) <= 1e-6 * 255.0;
}

void ImageBatch::validate() const {
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("image batch: pixel " + std::to_string(v) + " outside [0,1]");
    if (eight_bit_ && !on_8bit_grid(v)) {
      throw DataError("image batch: pixel " + std::to_string(v) + " not on the 8-bit grid");
    }
  }
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.images = images.gather(rows);
  out.classes = classes;
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  return out;
}

ImageBatch quantize_8bit(const ImageBatch& x) {
  ImageBatch out = x;
  for (float& v : out.values_) {
    const double level = std::round(static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * 255.0);
    v = std::clamp(static_cast<float>(level) / 255.0f, 0.0f, 1.0f);
  }
  out.eight_bit_ = true;
  return out;
}

ImageBatch project(const ImageBatch& x_cand, const ImageBatch& x_org, Norm norm, float eps) {
  if (!(eps > 0.0f)) throw DataError("project: eps must be positive");
  if (x_cand.batch() != x_org.batch() || !x_cand.same_geometry(x_org)) {
    throw DataError("project: candidate and original shapes differ");
  }
  ImageBatch out = x_cand;
  auto values = out.mutable_values();
  const auto org = x_org.values();
  const std::size_t d = x_cand.sample_size();
  for (std::size_t k = 0; k < x_cand.batch(); ++k) {
    float* row = values.data() + k * d;
    const float* base = org.data() + k * d;
    if (norm == Norm::kLinf) {
      for (std::size_t i = 0; i < d; ++i) row[i] = base[i] + std::clamp(row[i] - base[i], -eps, eps);
    } else {
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) sq += static_cast<double>(row[i] - base[i]) * (row[i] - base[i]);
      const double length = std::sqrt(sq);
      if (length > eps) {
        const float factor = static_cast<float>(eps / length);
        for (std::size_t i = 0; i < d; ++i) row[i] = base[i] + (row[i] - base[i]) * factor;
      }
    }
    for (std::size_t i = 0; i < d; ++i) row[i] = std::clamp(row[i], 0.0f, 1.0f);
  }
  return out;
}

std::vector<double> perturbation_norms(const ImageBatch& x, const ImageBatch& x_org, Norm norm) {
  if (x.batch() != x_org.batch() || !x.same_geometry(x_org)) {
    throw DataError("perturbation_norms: shapes differ");
  }
  std::vector<double> out(x.batch(), 0.0);
  for (std::size_t k = 0; k < x.batch(); ++k) {
    auto a = x.sample(k);
    auto b = x_org.sample(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      acc = norm == Norm::kLinf ? std::max(acc, std::abs(d)) : acc + d * d;
    }
    out[k] = norm == Norm::kLinf ? acc : std::sqrt(acc);
  }
  return out;
}

double quantized_bound(Norm norm, float eps, std::size_t sample_size) {
  const double rounding = 0.5 / 255.0;
  return norm == Norm::kLinf ? eps + rounding : eps + rounding * std::sqrt(static_cast<double>(sample_size));
}

}  // namespace querynet::data
