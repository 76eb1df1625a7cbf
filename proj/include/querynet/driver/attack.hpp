#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "querynet/core/querynet.hpp"

namespace querynet::driver {

struct AttackConfig {
  core::QueryNetConfig querynet;
  /// Per-sample victim budget; the query on the original counts.
  std::size_t budget = 2000;
  /// Leave out inputs the victim already misclassifies. When off they
  /// count as fooled by their first query.
  bool exclude_misclassified = true;
};

/// Best-so-far bookkeeping for the samples under attack.
struct AttackState {
  data::ImageBatch x_adv;
  std::vector<double> loss;
  std::vector<std::size_t> queries;
  /// Iteration at which the sample was fooled; absent while it resists.
  std::vector<std::optional<std::size_t>> success_iteration;

  bool succeeded(std::size_t k) const { return loss.at(k) <= 0.0; }
  std::vector<std::size_t> active() const;
};

struct CurvePoint {
  std::size_t iteration;
  double success_rate;
};

struct ConsistencyPoint {
  std::size_t iteration;
  double consistency;
  /// The bootstrap surrogates scored on the same records.
  double bootstrap;
};

struct SampleOutcome {
  /// Index into the full input set.
  std::size_t id;
  bool success;
  std::size_t queries;
  std::optional<std::size_t> success_iteration;
};

struct RunReport {
  std::size_t samples = 0;
  /// Inputs the victim already got wrong; excluded from the attack.
  std::vector<std::size_t> excluded;
  std::size_t successes = 0;
  /// Fraction of attacked samples the attack never fooled.
  double accuracy = 1.0;
  std::optional<double> mean_queries;
  std::optional<std::size_t> median_queries;
  std::size_t total_queries = 0;
  std::size_t iterations = 0;
  std::vector<SampleOutcome> outcomes;
  std::vector<CurvePoint> curve;
  /// Per-iteration selection counts, keyed by attacker id.
  std::vector<std::map<core::AttackerId, std::size_t>> selection;
  std::vector<ConsistencyPoint> consistency;
  std::vector<int> phases;
  std::size_t refits = 0;
  std::size_t phase3_surrogate_calls = 0;
};

/// Everything observable about one step, for callers that audit a run.
struct StepObserver {
  std::function<void(const core::StepResult&, std::span<const std::size_t> ids)> on_step;
};

struct AttackResult {
  AttackState state;
  RunReport report;
  std::vector<core::TraceRecord> trace;
};

/// Runs the iterative query strategy against `oracle`.
///
/// Inputs the victim misclassifies on the first query are excluded. The
/// rest are attacked until every one is fooled or out of budget. Best
/// images change only on strict loss improvement.
AttackResult run_attack(const data::LabeledSet& inputs, core::VictimOracle& oracle, const AttackConfig& config,
                        const StepObserver& observer = {});

/// Acc., A.Q. and lower-middle M.Q. over successful samples only.
/// `queries` and `success` describe the attacked samples.
struct Metrics {
  double accuracy = 1.0;
  std::size_t successes = 0;
  std::optional<double> mean_queries;
  std::optional<std::size_t> median_queries;
};
Metrics compute_metrics(std::span<const std::size_t> queries, const std::vector<bool>& success);

}  // namespace querynet::driver
