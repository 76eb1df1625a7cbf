#include "querynet/numgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace querynet::numgrad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

ShapeError::ShapeError(std::string primitive, const std::string& detail)
    : std::invalid_argument(primitive + ": " + detail), primitive_(std::move(primitive)) {}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor", "shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                                   " values, got " + std::to_string(values_.size()));
  }
  if (!std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); })) {
    throw NonFiniteInput("tensor: non-finite value in input of shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("reshape", "cannot view " + shape_string(shape_) + " as " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

void Tensor::fill(float value) { std::fill(values_.begin(), values_.end(), value); }

}  // namespace querynet::numgrad
