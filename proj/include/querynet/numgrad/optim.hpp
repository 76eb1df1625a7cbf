#pragma once

#include <vector>

#include "querynet/numgrad/tensor.hpp"

namespace querynet::numgrad {

/// Plain or momentum SGD: v = momentum·v + g; p -= lr·v.
class Sgd {
 public:
  explicit Sgd(float learning_rate, float momentum = 0.0f) : lr_(learning_rate), momentum_(momentum) {}

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  float learning_rate() const noexcept { return lr_; }

 private:
  float lr_;
  float momentum_;
  std::vector<Tensor> velocity_;
};

class Adam {
 public:
  explicit Adam(float learning_rate, float beta1 = 0.9f, float beta2 = 0.999f, float epsilon = 1e-8f)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  float learning_rate() const noexcept { return lr_; }
  long steps() const noexcept { return t_; }

 private:
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace querynet::numgrad
