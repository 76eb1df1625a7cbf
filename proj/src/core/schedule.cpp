#include "querynet/core/schedule.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace querynet::core {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kSurrogatesAndSquarePlus:
      return "surrogates+squareplus";
    case Phase::kSquarePlusAndSquare:
      return "squareplus+square";
    case Phase::kSquareOnly:
      return "square";
  }
  return "unknown";
}

std::vector<AttackerId> active_attackers(Phase phase, std::size_t n) {
  switch (phase) {
    case Phase::kSurrogatesAndSquarePlus: {
      std::vector<AttackerId> ids(n + 1);
      for (std::size_t i = 0; i <= n; ++i) ids[i] = i + 1;
      return ids;
    }
    case Phase::kSquarePlusAndSquare:
      return {squareplus_id(n), square_id(n)};
    case Phase::kSquareOnly:
      return {square_id(n)};
  }
  throw std::invalid_argument("active_attackers: invalid phase");
}

std::vector<double> initial_weights(std::size_t n) {
  std::vector<double> w(n + 2, 0.0);
  std::fill_n(w.begin(), n, 1.0);
  return w;
}

std::vector<double> update_weights(std::span<const AttackerId> chosen, const std::vector<bool>& improved,
                                   std::size_t n) {
  if (chosen.size() != improved.size()) throw std::invalid_argument("update_weights: one flag per sample required");
  std::vector<std::size_t> picked(n + 2, 0), won(n + 2, 0);
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    if (chosen[k] < 1 || chosen[k] > n + 2) {
      throw std::invalid_argument("update_weights: attacker " + std::to_string(chosen[k]) + " out of range");
    }
    ++picked[chosen[k] - 1];
    if (improved[k]) ++won[chosen[k] - 1];
  }
  std::vector<double> w(n + 2, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (picked[i] > 0) w[i] = static_cast<double>(won[i]) / static_cast<double>(picked[i]);
  }
  return w;
}

Phase advance_phase(Phase phase, std::span<const double> w, std::size_t n) {
  if (w.size() != n + 2) throw std::invalid_argument("advance_phase: weight vector must have n+2 entries");
  if (phase == Phase::kSurrogatesAndSquarePlus) {
    const double best = n == 0 ? 0.0 : *std::max_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
    if (w[n] >= best) return Phase::kSquarePlusAndSquare;
  } else if (phase == Phase::kSquarePlusAndSquare) {
    const double best = *std::max_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n + 1));
    if (w[n + 1] >= best) return Phase::kSquareOnly;
  }
  return phase;
}

std::vector<AttackerId> select_by_losses(std::span<const AttackerId> attackers, const CandidateLosses& losses,
                                         std::span<const double> surrogate_weights, std::size_t samples) {
  if (attackers.empty()) throw std::invalid_argument("select_by_losses: no candidates");
  if (!std::is_sorted(attackers.begin(), attackers.end())) {
    throw std::invalid_argument("select_by_losses: attacker ids must be ascending");
  }
  std::vector<AttackerId> chosen(samples, attackers.front());
  if (attackers.size() == 1) return chosen;
  if (losses.size() != attackers.size()) throw std::invalid_argument("select_by_losses: one loss table per candidate");
  for (const auto& table : losses) {
    if (table.size() != surrogate_weights.size()) {
      throw std::invalid_argument("select_by_losses: one loss row per surrogate");
    }
    for (const auto& row : table) {
      if (row.size() != samples) throw std::invalid_argument("select_by_losses: one loss per sample");
    }
  }
  for (std::size_t k = 0; k < samples; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < attackers.size(); ++c) {
      double score = 0.0;
      for (std::size_t j = 0; j < surrogate_weights.size(); ++j) {
        if (surrogate_weights[j] != 0.0) score += surrogate_weights[j] * losses[c][j][k];
      }
      if (score < best) {
        best = score;
        chosen[k] = attackers[c];
      }
    }
  }
  return chosen;
}

}  // namespace querynet::core
