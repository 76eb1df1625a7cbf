#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "querynet/data/image_batch.hpp"
#include "querynet/numgrad/optim.hpp"
#include "querynet/numgrad/tape.hpp"

namespace querynet::models {

/// Candidate operations of a searchable layer. All map (C,H,W) to (C,H,W).
enum class CandidateOp : std::size_t { kSkip = 0, kDenseRelu = 1, kConv1x1Relu = 2, kConv3x3Relu = 3 };
inline constexpr std::size_t kOpCount = 4;
std::string_view to_string(CandidateOp op);

struct SurrogateArch {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  int classes = 3;
  int layers = 2;

  std::size_t sample_size() const noexcept { return channels * height * width; }
  bool operator==(const SurrogateArch&) const = default;
};

/// Supernet of mixed-op layers followed by a linear head (raw logits).
///
/// Each layer computes Σ_op softmax(α)[op] · op(h). Weights θ and
/// architecture logits α are stored apart so they can use separate optimizers.
class Surrogate {
 public:
  Surrogate(SurrogateArch arch, std::vector<numgrad::Tensor> weights, std::vector<numgrad::Tensor> alphas);
  static Surrogate initialize(const SurrogateArch& arch, std::uint64_t seed);

  const SurrogateArch& arch() const noexcept { return arch_; }
  const std::vector<numgrad::Tensor>& weights() const noexcept { return weights_; }
  const std::vector<numgrad::Tensor>& alphas() const noexcept { return alphas_; }
  std::vector<numgrad::Tensor>& mutable_weights() noexcept { return weights_; }
  std::vector<numgrad::Tensor>& mutable_alphas() noexcept { return alphas_; }

  /// softmax(α) of one layer.
  std::array<float, kOpCount> mixing(std::size_t layer) const;

  struct Bindings {
    std::vector<numgrad::Var> weights;
    std::vector<numgrad::Var> alphas;
  };

  /// (B, K) logits. With `bind`, θ and α become tracked tape variables.
  numgrad::Var logits(numgrad::Tape& tape, numgrad::Var x, Bindings* bind = nullptr) const;

  /// Forward pass without gradients; (B, K) logits.
  numgrad::Tensor predict_logits(const data::ImageBatch& x) const;
  /// Forward pass without gradients; (B, K) softmax rows.
  numgrad::Tensor predict_probs(const data::ImageBatch& x) const;

  /// Number of forward evaluations (with or without gradients) so far.
  std::size_t forward_calls() const noexcept { return forward_calls_; }

 private:
  SurrogateArch arch_;
  std::vector<numgrad::Tensor> weights_;
  std::vector<numgrad::Tensor> alphas_;
  mutable std::size_t forward_calls_ = 0;
};

/// One ensemble member with its private training state.
struct SurrogateSlot {
  Surrogate model;
  numgrad::Adam weight_optimizer;
  numgrad::Adam arch_optimizer;
  std::mt19937_64 rng;
};

struct EnsembleOptions {
  std::vector<int> layers = {2, 3, 4};
  float weight_lr = 1e-3f;
  float arch_lr = 3e-3f;
};

class SurrogateEnsemble {
 public:
  SurrogateEnsemble() = default;
  /// `count` surrogates; layer counts cycle through options.layers.
  SurrogateEnsemble(std::size_t count, const SurrogateArch& base, const EnsembleOptions& options, std::uint64_t seed);

  std::size_t size() const noexcept { return slots_.size(); }
  bool empty() const noexcept { return slots_.empty(); }
  const Surrogate& operator[](std::size_t j) const { return slots_.at(j).model; }
  SurrogateSlot& slot(std::size_t j) { return slots_.at(j); }

  std::size_t forward_calls() const noexcept;

 private:
  std::vector<SurrogateSlot> slots_;
};

}  // namespace querynet::models
