#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace querynet::core {

/// Attackers are numbered 1..n for surrogate FGSM, n+1 for Square+ and
/// n+2 for Square.
using AttackerId = std::size_t;

inline AttackerId squareplus_id(std::size_t n) { return n + 1; }
inline AttackerId square_id(std::size_t n) { return n + 2; }

enum class Phase { kSurrogatesAndSquarePlus = 1, kSquarePlusAndSquare = 2, kSquareOnly = 3 };

std::string_view to_string(Phase phase);
inline int phase_index(Phase phase) { return static_cast<int>(phase); }

/// Ascending attacker ids active in `phase`.
std::vector<AttackerId> active_attackers(Phase phase, std::size_t n);

/// w₁..w_n = 1, w_{n+1} = w_{n+2} = 0. Index 0 holds w₁.
std::vector<double> initial_weights(std::size_t n);

/// Per-iteration success ratio of every attacker: how many of the samples
/// it was chosen for improved, over how many it was chosen for. Attackers
/// never chosen get 0. `chosen[k]` is the attacker of active sample k.
std::vector<double> update_weights(std::span<const AttackerId> chosen, const std::vector<bool>& improved,
                                   std::size_t n);

/// One-way switching: 1 → 2 once w_{n+1} ≥ max(w₁..w_n), 2 → 3 once
/// w_{n+2} ≥ max(w₁..w_{n+1}). Phase 3 is absorbing.
Phase advance_phase(Phase phase, std::span<const double> w, std::size_t n);

/// Surrogate margin losses of every candidate: losses[c][j][k] is the loss
/// surrogate j assigns to candidate c of sample k.
using CandidateLosses = std::vector<std::vector<std::vector<double>>>;

/// Per sample, the attacker whose candidate has the lowest Σ_j w_j·loss.
/// Ties go to the smallest attacker id; `attackers` must be ascending.
/// With one candidate the losses are not read and may be empty.
std::vector<AttackerId> select_by_losses(std::span<const AttackerId> attackers, const CandidateLosses& losses,
                                         std::span<const double> surrogate_weights, std::size_t samples);

}  // namespace querynet::core
