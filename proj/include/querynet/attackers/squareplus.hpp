#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "querynet/attackers/square.hpp"

namespace querynet::attackers {

/// Past victim queries of one original sample with their margin losses.
/// The Lipschitz estimate is kept up to date as entries arrive.
class LipschitzHistory {
 public:
  explicit LipschitzHistory(std::size_t sample_size) : sample_size_(sample_size) {}

  void add(std::span<const float> query, double loss);

  std::size_t size() const noexcept { return losses_.size(); }
  std::size_t sample_size() const noexcept { return sample_size_; }
  /// max over pairs of |L_i − L_j| / ‖q_i − q_j‖₂; pairs at zero distance are skipped.
  double lipschitz() const noexcept { return lipschitz_; }
  double max_loss() const noexcept { return max_loss_; }
  double min_loss() const noexcept { return min_loss_; }
  std::span<const float> query(std::size_t i) const { return {points_.data() + i * sample_size_, sample_size_}; }
  double loss(std::size_t i) const { return losses_.at(i); }

  std::vector<double> distances(std::span<const float> x) const;

 private:
  std::size_t sample_size_;
  std::vector<float> points_;
  std::vector<double> losses_;
  double lipschitz_ = 0.0;
  double max_loss_ = 0.0;
  double min_loss_ = 0.0;
};

/// How the query index in the distance term is bound.
enum class Binding {
  /// k̂·min_i ‖x − q_i‖ − max_i L_i ≥ −β·min_i L_i
  kMinDistance,
  /// k̂·‖x − q_i‖ − L_i ≥ −β·min_j L_j for every i
  kEveryPoint,
};

/// Lipschitz acceptance test. Always true with fewer than two entries.
bool potential_maximizer(std::span<const float> x, const LipschitzHistory& history, double beta,
                         Binding binding = Binding::kMinDistance);

struct SquarePlusOptions {
  double beta = 0.7;
  std::size_t max_proposals = 50;
  Binding binding = Binding::kMinDistance;
};

/// Accept predicate for one proposal of one row; the default wraps potential_maximizer.
using AcceptFn = std::function<bool(std::size_t row, std::span<const float> proposal)>;

struct SquarePlusResult {
  data::ImageBatch candidates;
  /// Proposals drawn per row (0 for rows that received a stripe init).
  std::vector<std::size_t> proposals;
};

/// Square proposals filtered by `accept`: each initialized row draws up to
/// max_proposals squares from its current image and keeps the first one
/// accepted, or the last one drawn. Uninitialized rows get a stripe init.
/// Each row's schedule counter advances once per call.
SquarePlusResult squareplus_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                      std::span<const std::size_t> ids, data::Norm norm, float eps,
                                      SquareState& state, const AcceptFn& accept,
                                      std::size_t max_proposals = 50);

/// Same, with the predicate evaluated against per-row histories.
SquarePlusResult squareplus_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                      std::span<const std::size_t> ids, data::Norm norm, float eps,
                                      SquareState& state, std::span<const LipschitzHistory* const> histories,
                                      const SquarePlusOptions& options = {});

}  // namespace querynet::attackers
