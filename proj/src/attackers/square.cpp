#include "querynet/attackers/square.hpp"

#include <algorithm>
#include <cmath>

namespace querynet::attackers {

float SquareSchedule::fraction(std::size_t iteration) const {
  float p = p_init;
  for (std::size_t b : breakpoints) {
    if (iteration > b) p *= 0.5f;
  }
  return p;
}

std::size_t square_side(float p, std::size_t height, std::size_t width) {
  const double area = static_cast<double>(p) * static_cast<double>(height * width);
  const auto side = static_cast<std::size_t>(std::max(1.0, std::round(std::sqrt(area))));
  return std::min(side, std::min(height, width));
}

SquareState::SquareState(std::size_t samples, SquareSchedule schedule, std::uint64_t seed)
    : schedule_(std::move(schedule)) {
  if (!(schedule_.p_init > 0.0f && schedule_.p_init <= 1.0f)) {
    throw std::invalid_argument("square: p_init must lie in (0, 1]");
  }
  slots_.resize(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(k), std::uint64_t{0x5157u}};
    slots_[k].rng.seed(seq);
  }
}

void SquareState::mark_initialized(std::size_t sample) {
  Slot& slot = slots_.at(sample);
  if (slot.initialized) throw AlreadyInitialized("square: sample " + std::to_string(sample) + " already initialized");
  slot.initialized = true;
}

data::ImageBatch square_init(const data::ImageBatch& x_org, std::span<const std::size_t> ids, data::Norm norm,
                             float eps, SquareState& state) {
  if (ids.size() != x_org.batch()) throw std::invalid_argument("square_init: one id per row required");
  const std::size_t c = x_org.channels(), h = x_org.height(), w = x_org.width();
  const std::size_t d = x_org.sample_size();
  data::ImageBatch out = x_org;
  auto values = out.mutable_values();
  const float magnitude = norm == data::Norm::kLinf ? eps : eps / std::sqrt(static_cast<float>(d));
  for (std::size_t row = 0; row < ids.size(); ++row) {
    state.mark_initialized(ids[row]);
    auto& rng = state.rng(ids[row]);
    std::bernoulli_distribution coin(0.5);
    float* x = values.data() + row * d;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t col = 0; col < w; ++col) {
        const float offset = coin(rng) ? magnitude : -magnitude;
        for (std::size_t y = 0; y < h; ++y) x[(ch * h + y) * w + col] += offset;
      }
    }
  }
  return data::project(out, x_org, norm, eps);
}

std::vector<float> propose_square(std::span<const float> x, std::span<const float> x_org, std::size_t channels,
                                  std::size_t height, std::size_t width, data::Norm norm, float eps, float p,
                                  std::mt19937_64& rng) {
  const std::size_t side = square_side(p, height, width);
  std::uniform_int_distribution<std::size_t> pick_y(0, height - side);
  std::uniform_int_distribution<std::size_t> pick_x(0, width - side);
  std::bernoulli_distribution coin(0.5);
  const std::size_t top = pick_y(rng);
  const std::size_t left = pick_x(rng);

  std::vector<float> delta(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) delta[i] = x[i] - x_org[i];
  auto inside = [&](std::size_t ch, std::size_t y, std::size_t xx) { return (ch * height + y) * width + xx; };

  if (norm == data::Norm::kLinf) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const float value = coin(rng) ? eps : -eps;
      for (std::size_t y = top; y < top + side; ++y) {
        for (std::size_t xx = left; xx < left + side; ++xx) delta[inside(ch, y, xx)] = value;
      }
    }
  } else {
    double total = 0.0, window = 0.0;
    for (float v : delta) total += static_cast<double>(v) * v;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t y = top; y < top + side; ++y) {
        for (std::size_t xx = left; xx < left + side; ++xx) {
          const double v = delta[inside(ch, y, xx)];
          window += v * v;
        }
      }
    }
    // Budget the window may spend: what is left of eps² once the rest of the
    // perturbation is paid for, but at least the window's area share of eps².
    const double cells = static_cast<double>(channels * side * side);
    const double share = static_cast<double>(eps) * eps * static_cast<double>(side * side) /
                         static_cast<double>(height * width);
    const double budget = std::max(static_cast<double>(eps) * eps - (total - window), share);
    const float magnitude = static_cast<float>(std::sqrt(budget / cells));
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const float value = coin(rng) ? magnitude : -magnitude;
      for (std::size_t y = top; y < top + side; ++y) {
        for (std::size_t xx = left; xx < left + side; ++xx) delta[inside(ch, y, xx)] = value;
      }
    }
  }

  std::vector<float> out(x.size());
  if (norm == data::Norm::kL2) {
    double sq = 0.0;
    for (float v : delta) sq += static_cast<double>(v) * v;
    const double length = std::sqrt(sq);
    const float factor = length > eps ? static_cast<float>(eps / length) : 1.0f;
    for (float& v : delta) v *= factor;
  } else {
    for (float& v : delta) v = std::clamp(v, -eps, eps);
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x_org[i] + delta[i], 0.0f, 1.0f);
  return out;
}

data::ImageBatch square_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                  std::span<const std::size_t> ids, data::Norm norm, float eps, SquareState& state) {
  if (ids.size() != x.batch() || x.batch() != x_org.batch() || !x.same_geometry(x_org)) {
    throw std::invalid_argument("square_candidate: rows, originals and ids must align");
  }
  data::ImageBatch out = x;
  for (std::size_t row = 0; row < ids.size(); ++row) {
    const std::size_t id = ids[row];
    if (!state.initialized(id)) throw NotInitialized("square: sample " + std::to_string(id) + " not initialized");
    auto proposal = propose_square(x.sample(row), x_org.sample(row), x.channels(), x.height(), x.width(), norm, eps,
                                   state.p(id), state.rng(id));
    state.advance(id);
    auto dst = out.mutable_sample(row);
    std::copy(proposal.begin(), proposal.end(), dst.begin());
  }
  return out;
}

data::ImageBatch square_attack(const data::ImageBatch& x, const data::ImageBatch& x_org,
                               std::span<const std::size_t> ids, data::Norm norm, float eps, SquareState& state) {
  std::vector<std::size_t> fresh_rows, fresh_ids, warm_rows, warm_ids;
  for (std::size_t row = 0; row < ids.size(); ++row) {
    if (state.initialized(ids[row])) {
      warm_rows.push_back(row);
      warm_ids.push_back(ids[row]);
    } else {
      fresh_rows.push_back(row);
      fresh_ids.push_back(ids[row]);
    }
  }
  data::ImageBatch out = x;
  if (!fresh_rows.empty()) {
    const auto init = square_init(x_org.gather(fresh_rows), fresh_ids, norm, eps, state);
    for (std::size_t i = 0; i < fresh_rows.size(); ++i) out.assign_sample(fresh_rows[i], init, i);
  }
  if (!warm_rows.empty()) {
    const auto moved = square_candidate(x.gather(warm_rows), x_org.gather(warm_rows), warm_ids, norm, eps, state);
    for (std::size_t i = 0; i < warm_rows.size(); ++i) out.assign_sample(warm_rows[i], moved, i);
  }
  return out;
}

}  // namespace querynet::attackers
