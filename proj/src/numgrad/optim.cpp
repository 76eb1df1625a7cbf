#include "querynet/numgrad/optim.hpp"

#include <cmath>

namespace querynet::numgrad {
namespace {

void check_aligned(const char* name, const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                   std::vector<Tensor>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError(name, std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                               " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw ShapeError(name, "parameter " + std::to_string(i) + " " + shape_string(params[i].shape()) +
                                 " vs gradient " + shape_string(grads[i].shape()));
    }
  }
  if (state.empty()) {
    for (const Tensor& p : params) state.emplace_back(p.shape(), 0.0f);
  } else if (state.size() != params.size()) {
    throw ShapeError(name, "optimizer state was built for a different parameter list");
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (state[i].shape() != params[i].shape()) {
        throw ShapeError(name, "accumulator " + std::to_string(i) + " " + shape_string(state[i].shape()) +
                                   " vs parameter " + shape_string(params[i].shape()));
      }
    }
  }
}

}  // namespace

void Sgd::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  check_aligned("sgd_step", params, grads, velocity_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      if (momentum_ == 0.0f) {
        params[i][j] -= lr_ * grads[i][j];
      } else {
        velocity_[i][j] = momentum_ * velocity_[i][j] + grads[i][j];
        params[i][j] -= lr_ * velocity_[i][j];
      }
    }
  }
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  check_aligned("adam_step", params, grads, m_);
  check_aligned("adam_step", params, grads, v_);
  ++t_;
  const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  const float step = lr_ * std::sqrt(c2) / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    const float* g = grads[i].data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j]) + eps_ * std::sqrt(c2));
    }
  }
}

}  // namespace querynet::numgrad
