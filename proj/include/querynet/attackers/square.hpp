#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "querynet/data/image_batch.hpp"

namespace querynet::attackers {

/// Fraction of coordinates a square covers, halved at each breakpoint the
/// per-sample counter has passed.
struct SquareSchedule {
  float p_init = 0.05f;
  std::vector<std::size_t> breakpoints = {10, 50, 200, 500, 1000, 2000, 4000, 8000};

  float fraction(std::size_t iteration) const;
};

/// max(1, round(sqrt(p·H·W))), capped at min(H, W).
std::size_t square_side(float p, std::size_t height, std::size_t width);

class AlreadyInitialized : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};
class NotInitialized : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-sample random-search state: stripe flag, iteration counter and an
/// independent RNG stream derived from (seed, sample id).
class SquareState {
 public:
  SquareState(std::size_t samples, SquareSchedule schedule, std::uint64_t seed);

  std::size_t samples() const noexcept { return slots_.size(); }
  bool initialized(std::size_t sample) const { return slots_.at(sample).initialized; }
  std::size_t iteration(std::size_t sample) const { return slots_.at(sample).iteration; }
  float p(std::size_t sample) const { return schedule_.fraction(iteration(sample)); }
  const SquareSchedule& schedule() const noexcept { return schedule_; }

  std::mt19937_64& rng(std::size_t sample) { return slots_.at(sample).rng; }
  void mark_initialized(std::size_t sample);
  void advance(std::size_t sample) { ++slots_.at(sample).iteration; }

 private:
  struct Slot {
    bool initialized = false;
    std::size_t iteration = 0;
    std::mt19937_64 rng;
  };
  SquareSchedule schedule_;
  std::vector<Slot> slots_;
};

/// Vertical-stripe start: every (channel, column) gets a ±eps offset (linf)
/// or a ±1 stripe pattern scaled to the l2 ball. Rows of `x_org` correspond
/// to global sample ids `ids`. Throws AlreadyInitialized on re-init.
data::ImageBatch square_init(const data::ImageBatch& x_org, std::span<const std::size_t> ids, data::Norm norm,
                             float eps, SquareState& state);

/// One random square on top of the current perturbation, for one row.
/// Does not touch the state's counter.
std::vector<float> propose_square(std::span<const float> x, std::span<const float> x_org, std::size_t channels,
                                  std::size_t height, std::size_t width, data::Norm norm, float eps, float p,
                                  std::mt19937_64& rng);

/// Square candidates for initialized rows; advances each row's counter once.
data::ImageBatch square_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                  std::span<const std::size_t> ids, data::Norm norm, float eps, SquareState& state);

/// Stripe init for rows not yet initialized, square_candidate for the rest.
data::ImageBatch square_attack(const data::ImageBatch& x, const data::ImageBatch& x_org,
                               std::span<const std::size_t> ids, data::Norm norm, float eps, SquareState& state);

}  // namespace querynet::attackers
