#include "querynet/driver/attack.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "querynet/driver/margin.hpp"

namespace querynet::driver {

std::vector<std::size_t> AttackState::active() const {
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < loss.size(); ++k) {
    if (!succeeded(k)) ids.push_back(k);
  }
  return ids;
}

Metrics compute_metrics(std::span<const std::size_t> queries, const std::vector<bool>& success) {
  if (queries.size() != success.size()) throw std::invalid_argument("compute_metrics: one flag per sample");
  Metrics m;
  std::vector<std::size_t> won;
  for (std::size_t k = 0; k < queries.size(); ++k) {
    if (success[k]) won.push_back(queries[k]);
  }
  m.successes = won.size();
  if (!queries.empty()) m.accuracy = 1.0 - static_cast<double>(won.size()) / static_cast<double>(queries.size());
  if (won.empty()) return m;
  std::sort(won.begin(), won.end());
  m.mean_queries = static_cast<double>(std::accumulate(won.begin(), won.end(), std::size_t{0})) /
                   static_cast<double>(won.size());
  m.median_queries = won[(won.size() - 1) / 2];
  return m;
}

AttackResult run_attack(const data::LabeledSet& inputs, core::VictimOracle& oracle, const AttackConfig& config,
                        const StepObserver& observer) {
  if (config.budget < 1) throw std::invalid_argument("run_attack: budget must be at least 1");
  if (inputs.size() == 0) throw std::invalid_argument("run_attack: no inputs");
  if (oracle.classes() != inputs.classes) throw std::invalid_argument("run_attack: oracle and labels disagree on K");

  AttackResult result;
  RunReport& report = result.report;
  report.samples = inputs.size();

  const auto originals = data::quantize_8bit(inputs.images);
  const auto probs0 = oracle.query(originals);
  const auto loss0 = margin_losses(probs0, inputs.labels);

  std::vector<std::size_t> attacked;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (config.exclude_misclassified && loss0[k] <= 0.0) {
      report.excluded.push_back(k);
    } else {
      attacked.push_back(k);
    }
  }
  report.total_queries = inputs.size();

  AttackState& state = result.state;
  const auto subset = inputs.subset(attacked);
  state.x_adv = data::quantize_8bit(subset.images);
  state.loss.resize(attacked.size());
  state.queries.assign(attacked.size(), 1);
  state.success_iteration.resize(attacked.size());
  for (std::size_t k = 0; k < attacked.size(); ++k) {
    state.loss[k] = loss0[attacked[k]];
    if (state.loss[k] <= 0.0) state.success_iteration[k] = 0;
  }
  auto success_rate = [&] {
    if (attacked.empty()) return 0.0;
    std::size_t won = 0;
    for (std::size_t k = 0; k < attacked.size(); ++k) won += state.succeeded(k) ? 1 : 0;
    return static_cast<double>(won) / static_cast<double>(attacked.size());
  };
  report.curve.push_back({0, success_rate()});

  if (!attacked.empty() && config.budget > 1) {
    core::QueryNet net(state.x_adv, subset.labels, inputs.classes, config.querynet);
    const auto probs_attacked = [&] {
      numgrad::Tensor p({attacked.size(), probs0.dim(1)});
      const std::size_t kk = probs0.dim(1);
      for (std::size_t i = 0; i < attacked.size(); ++i) {
        std::copy_n(probs0.data() + attacked[i] * kk, kk, p.data() + i * kk);
      }
      return p;
    }();
    if (const auto c = net.bootstrap(probs_attacked)) report.consistency.push_back({0, *c, *c});
    report.phases.push_back(core::phase_index(net.phase()));
    for (std::size_t k = 0; k < attacked.size(); ++k) {
      if (state.succeeded(k)) net.retire(k);
    }

    while (true) {
      std::vector<std::size_t> ids;
      for (std::size_t k = 0; k < attacked.size(); ++k) {
        if (!state.succeeded(k) && state.queries[k] < config.budget) ids.push_back(k);
      }
      if (ids.empty()) break;
      std::vector<double> best(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) best[i] = state.loss[ids[i]];
      const bool phase3 = net.phase() == core::Phase::kSquareOnly;
      auto step = net.step(ids, state.x_adv.gather(ids), best, oracle);
      if (observer.on_step) observer.on_step(step, ids);

      report.total_queries += ids.size();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t k = ids[i];
        ++state.queries[k];
        if (step.improved[i]) {
          state.loss[k] = step.losses[i];
          state.x_adv.assign_sample(k, step.queries, i);
          if (state.succeeded(k)) {
            state.success_iteration[k] = step.trace.iteration;
            net.retire(k);
          }
        }
      }
      if (phase3) report.phase3_surrogate_calls += step.trace.surrogate_calls;
      report.curve.push_back({step.trace.iteration, success_rate()});
      report.selection.push_back(step.trace.selected);
      report.phases.push_back(core::phase_index(step.trace.phase_after));
      if (step.trace.consistency) {
        report.consistency.push_back(
            {step.trace.iteration, *step.trace.consistency, step.trace.bootstrap_consistency.value_or(0.0)});
      }
      result.trace.push_back(std::move(step.trace));
    }
    report.iterations = net.iteration();
    report.refits = net.refits();
  }

  std::vector<bool> success(attacked.size());
  for (std::size_t k = 0; k < attacked.size(); ++k) {
    success[k] = state.succeeded(k);
    report.outcomes.push_back({attacked[k], success[k], state.queries[k], state.success_iteration[k]});
  }
  const auto metrics = compute_metrics(state.queries, success);
  report.successes = metrics.successes;
  report.accuracy = metrics.accuracy;
  report.mean_queries = metrics.mean_queries;
  report.median_queries = metrics.median_queries;
  return result;
}

}  // namespace querynet::driver
