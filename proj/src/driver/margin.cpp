#include "querynet/driver/margin.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace querynet::driver {

double margin_loss(std::span<const float> probs, int label) {
  if (probs.size() < 2) throw std::invalid_argument("margin_loss: need at least two classes");
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw std::invalid_argument("margin_loss: label " + std::to_string(label) + " out of range");
  }
  double total = 0.0;
  double rival = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    total += probs[k];
    if (static_cast<int>(k) != label) rival = std::max(rival, static_cast<double>(probs[k]));
  }
  if (std::abs(total - 1.0) > 1e-4) {
    throw std::invalid_argument("margin_loss: probabilities sum to " + std::to_string(total));
  }
  return static_cast<double>(probs[static_cast<std::size_t>(label)]) - rival;
}

std::vector<double> margin_losses(const numgrad::Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
    throw numgrad::ShapeError("margin_losses", "probs " + numgrad::shape_string(probs.shape()) + " with " +
                                                   std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = probs.dim(1);
  std::vector<double> out(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    out[b] = margin_loss(probs.values().subspan(b * k, k), labels[b]);
  }
  return out;
}

}  // namespace querynet::driver
