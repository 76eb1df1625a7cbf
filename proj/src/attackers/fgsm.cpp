#include "querynet/attackers/fgsm.hpp"

#include <cmath>

#include "querynet/numgrad/ops.hpp"

namespace querynet::attackers {

numgrad::Tensor adversarial_gradient(const models::Surrogate& surrogate, const data::ImageBatch& x,
                                     std::span<const int> labels) {
  numgrad::Tape tape;
  numgrad::Var input = tape.variable(x.tensor());
  numgrad::Var probs = numgrad::softmax(surrogate.logits(tape, input));
  numgrad::Var objective = numgrad::scale(numgrad::sum(numgrad::margin(probs, labels)), -1.0f);
  tape.backward(objective);
  return tape.grad(input);
}

data::ImageBatch fgsm_step(const data::ImageBatch& x, const data::ImageBatch& x_org, const numgrad::Tensor& direction,
                           data::Norm norm, float eps) {
  if (direction.size() != x.values().size()) {
    throw numgrad::ShapeError("fgsm", "direction " + numgrad::shape_string(direction.shape()) +
                                          " does not match the image batch");
  }
  data::ImageBatch stepped = x;
  auto values = stepped.mutable_values();
  const std::size_t d = x.sample_size();
  for (std::size_t k = 0; k < x.batch(); ++k) {
    const float* g = direction.data() + k * d;
    float* row = values.data() + k * d;
    if (norm == data::Norm::kLinf) {
      for (std::size_t i = 0; i < d; ++i) {
        const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
        row[i] += 2.0f * eps * s;
      }
    } else {
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) sq += static_cast<double>(g[i]) * g[i];
      if (sq == 0.0) continue;
      const float factor = static_cast<float>(2.0 * eps / std::sqrt(sq));
      for (std::size_t i = 0; i < d; ++i) row[i] += factor * g[i];
    }
  }
  return data::project(stepped, x_org, norm, eps);
}

data::ImageBatch fgsm_candidate(const models::Surrogate& surrogate, const data::ImageBatch& x,
                                std::span<const int> labels, const data::ImageBatch& x_org, data::Norm norm, float eps) {
  return fgsm_step(x, x_org, adversarial_gradient(surrogate, x, labels), norm, eps);
}

}  // namespace querynet::attackers
