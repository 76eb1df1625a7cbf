#include "querynet/attackers/squareplus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace querynet::attackers {
namespace {

double distance(std::span<const float> a, std::span<const float> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

}  // namespace

void LipschitzHistory::add(std::span<const float> query, double loss) {
  if (query.size() != sample_size_) throw std::invalid_argument("LipschitzHistory: query size mismatch");
  for (std::size_t i = 0; i < losses_.size(); ++i) {
    const double dist = distance(query, this->query(i));
    if (dist > 0.0) lipschitz_ = std::max(lipschitz_, std::abs(loss - losses_[i]) / dist);
  }
  if (losses_.empty()) {
    max_loss_ = min_loss_ = loss;
  } else {
    max_loss_ = std::max(max_loss_, loss);
    min_loss_ = std::min(min_loss_, loss);
  }
  points_.insert(points_.end(), query.begin(), query.end());
  losses_.push_back(loss);
}

std::vector<double> LipschitzHistory::distances(std::span<const float> x) const {
  if (x.size() != sample_size_) throw std::invalid_argument("LipschitzHistory: query size mismatch");
  std::vector<double> out(losses_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = distance(x, query(i));
  return out;
}

bool potential_maximizer(std::span<const float> x, const LipschitzHistory& history, double beta, Binding binding) {
  if (history.size() < 2) return true;
  const double floor = -beta * history.min_loss();
  const double k = history.lipschitz();
  const auto dist = history.distances(x);
  if (binding == Binding::kMinDistance) {
    const double nearest = *std::min_element(dist.begin(), dist.end());
    return k * nearest - history.max_loss() >= floor;
  }
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (k * dist[i] - history.loss(i) < floor) return false;
  }
  return true;
}

SquarePlusResult squareplus_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                      std::span<const std::size_t> ids, data::Norm norm, float eps,
                                      SquareState& state, const AcceptFn& accept, std::size_t max_proposals) {
  if (ids.size() != x.batch() || x.batch() != x_org.batch() || !x.same_geometry(x_org)) {
    throw std::invalid_argument("squareplus_candidate: rows, originals and ids must align");
  }
  if (max_proposals == 0) throw std::invalid_argument("squareplus_candidate: max_proposals must be positive");
  SquarePlusResult result{x, std::vector<std::size_t>(ids.size(), 0)};

  std::vector<std::size_t> fresh_rows, fresh_ids;
  for (std::size_t row = 0; row < ids.size(); ++row) {
    const std::size_t id = ids[row];
    if (!state.initialized(id)) {
      fresh_rows.push_back(row);
      fresh_ids.push_back(id);
      continue;
    }
    const float p = state.p(id);
    std::vector<float> proposal;
    for (std::size_t m = 0; m < max_proposals; ++m) {
      proposal = propose_square(x.sample(row), x_org.sample(row), x.channels(), x.height(), x.width(), norm, eps, p,
                                state.rng(id));
      ++result.proposals[row];
      if (accept(row, proposal)) break;
    }
    state.advance(id);
    auto dst = result.candidates.mutable_sample(row);
    std::copy(proposal.begin(), proposal.end(), dst.begin());
  }
  if (!fresh_rows.empty()) {
    const auto init = square_init(x_org.gather(fresh_rows), fresh_ids, norm, eps, state);
    for (std::size_t i = 0; i < fresh_rows.size(); ++i) result.candidates.assign_sample(fresh_rows[i], init, i);
  }
  return result;
}

SquarePlusResult squareplus_candidate(const data::ImageBatch& x, const data::ImageBatch& x_org,
                                      std::span<const std::size_t> ids, data::Norm norm, float eps,
                                      SquareState& state, std::span<const LipschitzHistory* const> histories,
                                      const SquarePlusOptions& options) {
  if (histories.size() != ids.size()) throw std::invalid_argument("squareplus_candidate: one history per row");
  const AcceptFn accept = [&](std::size_t row, std::span<const float> proposal) {
    return histories[row] == nullptr || potential_maximizer(proposal, *histories[row], options.beta, options.binding);
  };
  return squareplus_candidate(x, x_org, ids, norm, eps, state, accept, options.max_proposals);
}

}  // namespace querynet::attackers
