#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "querynet/data/image_batch.hpp"
#include "querynet/numgrad/tape.hpp"

namespace querynet::models {

struct VictimArch {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  int classes = 3;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;

  bool operator==(const VictimArch&) const = default;
};

/// conv3×3 → ReLU → pool → conv3×3 → ReLU → pool → dense → softmax.
class VictimModel {
 public:
  VictimModel(VictimArch arch, std::vector<numgrad::Tensor> params);
  static VictimModel initialize(const VictimArch& arch, std::uint64_t seed);

  const VictimArch& arch() const noexcept { return arch_; }
  const std::vector<numgrad::Tensor>& params() const noexcept { return params_; }
  std::vector<numgrad::Tensor>& mutable_params() noexcept { return params_; }

  /// Logits on `tape`; parameters become tracked variables when `param_vars` is given.
  numgrad::Var logits(numgrad::Tape& tape, numgrad::Var x, std::vector<numgrad::Var>* param_vars = nullptr) const;

  /// (B, K) probability rows.
  numgrad::Tensor predict(const data::ImageBatch& x) const;
  std::vector<int> classify(const data::ImageBatch& x) const;

 private:
  VictimArch arch_;
  std::vector<numgrad::Tensor> params_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, double accuracy) : std::runtime_error(what), accuracy_(accuracy) {}
  double accuracy() const noexcept { return accuracy_; }

 private:
  double accuracy_;
};

struct VictimTrainOptions {
  int epochs = 30;
  std::size_t batch_size = 32;
  float learning_rate = 3e-3f;
  double held_out_fraction = 0.2;
  /// Below this held-out accuracy training is reported as diverged.
  double min_accuracy = 0.9;
  std::size_t min_per_class = 50;
};

struct TrainedVictim {
  VictimModel model;
  double held_out_accuracy = 0.0;
  std::size_t train_samples = 0;
  std::size_t held_out_samples = 0;
};

/// Trains on a stratified split of `data` and measures accuracy on the rest.
TrainedVictim train_victim(const data::LabeledSet& data, std::uint64_t seed, const VictimTrainOptions& options = {});

double accuracy(const VictimModel& model, const data::LabeledSet& data);

}  // namespace querynet::models
