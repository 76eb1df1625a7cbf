#pragma once

#include <span>
#include <vector>

#include "querynet/numgrad/tensor.hpp"

namespace querynet::driver {

/// p[y] − max_{k≠y} p[k]. Negative means the row is misclassified.
/// Requires K ≥ 2 and a row summing to 1 ± 1e-4.
double margin_loss(std::span<const float> probs, int label);

/// margin_loss for every row of a (B, K) tensor.
std::vector<double> margin_losses(const numgrad::Tensor& probs, std::span<const int> labels);

}  // namespace querynet::driver
