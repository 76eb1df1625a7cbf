#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "querynet/attackers/square.hpp"
#include "querynet/attackers/squareplus.hpp"
#include "querynet/core/oracle.hpp"
#include "querynet/core/schedule.hpp"
#include "querynet/models/query_store.hpp"
#include "querynet/models/surrogate.hpp"
#include "querynet/models/training.hpp"

namespace querynet::core {

struct QueryNetConfig {
  data::Norm norm = data::Norm::kLinf;
  float eps = 0.15f;
  std::size_t surrogates = 3;
  models::EnsembleOptions ensemble;
  models::FitOptions fit;
  attackers::SquareSchedule schedule;
  attackers::SquarePlusOptions squareplus;
  /// Fit surrogates once at bootstrap and never again.
  bool disable_nas = false;
  /// Square+ keeps its first proposal; the Lipschitz filter is off.
  bool disable_squareplus = false;
  /// Start in the Square-only phase with no surrogates at all.
  bool square_only = false;
  /// 0 keeps the plain per-iteration weights; otherwise w ← ema·w + (1−ema)·w_new.
  double weight_ema = 0.0;
  /// Consistency is sampled at every iteration up to this one, then every
  /// consistency_stride iterations while surrogates are still trained.
  std::size_t consistency_dense = 10;
  std::size_t consistency_stride = 25;
  std::uint64_t seed = 0;
};

/// One JSON-lines trace entry.
struct TraceRecord {
  std::size_t iteration = 0;
  Phase phase_before = Phase::kSurrogatesAndSquarePlus;
  Phase phase_after = Phase::kSurrogatesAndSquarePlus;
  std::size_t active = 0;
  std::map<AttackerId, std::size_t> selected;
  std::map<AttackerId, std::size_t> improved;
  std::vector<double> weights;
  /// The two switching conditions, logged regardless of phase.
  bool squareplus_leads = false;
  bool square_leads = false;
  std::size_t surrogate_calls = 0;
  std::size_t fit_batches = 0;
  /// Mean agreement with the victim over the whole store, for the current
  /// surrogates and for their snapshot right after bootstrap.
  std::optional<double> consistency;
  std::optional<double> bootstrap_consistency;
};

struct StepResult {
  /// Quantized queries, one per active sample, in input order.
  data::ImageBatch queries;
  numgrad::Tensor probs;
  std::vector<double> losses;
  std::vector<AttackerId> chosen;
  std::vector<bool> improved;
  TraceRecord trace;
};

/// Queried image left the ε-ball or the 8-bit grid.
class BoundViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Candidate generation, Eq.-3-style selection, query feedback, weight
/// update and phase switching for one attack run.
///
/// Sample ids index the originals given at construction. The caller owns
/// the best-so-far images and losses and passes the active ones to step().
class QueryNet {
 public:
  QueryNet(data::ImageBatch x_org, std::vector<int> labels, int classes, QueryNetConfig config);

  /// Records the victim's answers on the originals and fits the surrogates
  /// from scratch with the first-call batch cap. Returns the consistency
  /// right after that fit (absent without surrogates).
  std::optional<double> bootstrap(const numgrad::Tensor& probs_org);

  /// One round: candidates, selection, quantization and bound check, one
  /// victim query per active sample, then store append, refit, weight
  /// update and phase switch. If the oracle throws nothing is appended.
  StepResult step(std::span<const std::size_t> ids, const data::ImageBatch& x_best,
                  std::span<const double> loss_best, VictimOracle& oracle);

  /// Drops the Square+ history of a finished sample.
  void retire(std::size_t sample);

  Phase phase() const noexcept { return phase_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t surrogate_count() const noexcept { return ensemble_.size(); }
  const models::SurrogateEnsemble& ensemble() const noexcept { return ensemble_; }
  const models::QueryStore& store() const noexcept { return store_; }
  const QueryNetConfig& config() const noexcept { return config_; }
  /// Surrogate forward evaluations so far, training included.
  std::size_t surrogate_calls() const noexcept { return ensemble_.forward_calls(); }
  std::size_t refits() const noexcept { return refits_; }
  double mean_consistency() const;
  /// Same measure for the surrogates as they were right after bootstrap.
  double bootstrap_consistency() const;

 private:
  std::vector<double> evaluation_weights() const;
  CandidateLosses evaluate(const std::vector<data::ImageBatch>& candidates, std::span<const int> labels,
                           std::span<const double> w) const;
  void check_bounds(const data::ImageBatch& queries, const data::ImageBatch& originals) const;

  data::ImageBatch x_org_;
  std::vector<int> labels_;
  int classes_;
  QueryNetConfig config_;
  std::size_t n_;
  models::SurrogateEnsemble ensemble_;
  models::QueryStore store_;
  attackers::SquareState squareplus_state_;
  attackers::SquareState square_state_;
  std::vector<std::optional<attackers::LipschitzHistory>> histories_;
  std::vector<models::Surrogate> bootstrap_models_;
  std::vector<double> weights_;
  /// Surrogate weights of the last phase-1 iteration, used for evaluation
  /// once surrogates stop attacking.
  std::vector<double> frozen_eval_;
  Phase phase_;
  std::size_t iteration_ = 0;
  std::size_t refits_ = 0;
  bool bootstrapped_ = false;
};

}  // namespace querynet::core
