#include "querynet/core/querynet.hpp"

#include <algorithm>
#include <stdexcept>

#include "querynet/attackers/fgsm.hpp"
#include "querynet/driver/margin.hpp"

namespace querynet::core {
namespace {

models::SurrogateArch surrogate_arch(const data::ImageBatch& x, int classes) {
  models::SurrogateArch arch;
  arch.channels = x.channels();
  arch.height = x.height();
  arch.width = x.width();
  arch.classes = classes;
  return arch;
}

bool any_positive(std::span<const double> w) {
  return std::any_of(w.begin(), w.end(), [](double v) { return v > 0.0; });
}

}  // namespace

QueryNet::QueryNet(data::ImageBatch x_org, std::vector<int> labels, int classes, QueryNetConfig config)
    : x_org_(std::move(x_org)),
      labels_(std::move(labels)),
      classes_(classes),
      config_(std::move(config)),
      n_(config_.surrogates),
      ensemble_(config_.square_only ? models::SurrogateEnsemble()
                                     : models::SurrogateEnsemble(n_, surrogate_arch(x_org_, classes), config_.ensemble,
                                                                 config_.seed)),
      store_(x_org_.channels(), x_org_.height(), x_org_.width(), classes),
      squareplus_state_(x_org_.batch(), config_.schedule, config_.seed ^ 0x51ull),
      square_state_(x_org_.batch(), config_.schedule, config_.seed ^ 0x52ull),
      histories_(x_org_.batch()),
      weights_(initial_weights(n_)),
      frozen_eval_(weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(n_)),
      phase_(config_.square_only ? Phase::kSquareOnly : Phase::kSurrogatesAndSquarePlus) {
  if (labels_.size() != x_org_.batch()) throw std::invalid_argument("QueryNet: one label per original required");
  if (n_ < 1) throw std::invalid_argument("QueryNet: at least one surrogate required");
  if (!(config_.eps > 0.0f)) throw std::invalid_argument("QueryNet: eps must be positive");
}

std::optional<double> QueryNet::bootstrap(const numgrad::Tensor& probs_org) {
  if (bootstrapped_) throw std::logic_error("QueryNet: bootstrap called twice");
  bootstrapped_ = true;
  std::vector<std::size_t> ids(x_org_.batch());
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
  const auto originals = data::quantize_8bit(x_org_);
  store_.append(originals, probs_org, ids, 0);
  if (phase_ == Phase::kSquareOnly) return std::nullopt;

  const auto losses = driver::margin_losses(probs_org, labels_);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    histories_[k].emplace(x_org_.sample_size());
    histories_[k]->add(originals.sample(k), losses[k]);
  }
  models::fit_surrogates(ensemble_, store_, true, config_.fit);
  ++refits_;
  for (std::size_t j = 0; j < ensemble_.size(); ++j) bootstrap_models_.push_back(ensemble_[j]);
  return mean_consistency();
}

void QueryNet::retire(std::size_t sample) { histories_.at(sample).reset(); }

double QueryNet::mean_consistency() const {
  if (ensemble_.empty() || store_.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < ensemble_.size(); ++j) total += models::consistency(ensemble_[j], store_);
  return total / static_cast<double>(ensemble_.size());
}

double QueryNet::bootstrap_consistency() const {
  if (bootstrap_models_.empty() || store_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& model : bootstrap_models_) total += models::consistency(model, store_);
  return total / static_cast<double>(bootstrap_models_.size());
}

std::vector<double> QueryNet::evaluation_weights() const {
  if (phase_ == Phase::kSurrogatesAndSquarePlus) {
    return {weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(n_)};
  }
  return frozen_eval_;
}

CandidateLosses QueryNet::evaluate(const std::vector<data::ImageBatch>& candidates, std::span<const int> labels,
                                   std::span<const double> w) const {
  const std::size_t rows = labels.size();
  CandidateLosses losses(candidates.size(), std::vector<std::vector<double>>(w.size(), std::vector<double>(rows, 0.0)));
  // All candidates go through each surrogate as one batch.
  data::ImageBatch stacked(rows * candidates.size(), x_org_.channels(), x_org_.height(), x_org_.width());
  std::vector<int> stacked_labels(rows * candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t k = 0; k < rows; ++k) {
      stacked.assign_sample(c * rows + k, candidates[c], k);
      stacked_labels[c * rows + k] = labels[k];
    }
  }
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (w[j] == 0.0) continue;
    const auto probs = ensemble_[j].predict_probs(stacked);
    const auto margins = driver::margin_losses(probs, stacked_labels);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      for (std::size_t k = 0; k < rows; ++k) losses[c][j][k] = margins[c * rows + k];
    }
  }
  return losses;
}

void QueryNet::check_bounds(const data::ImageBatch& queries, const data::ImageBatch& originals) const {
  if (!queries.eight_bit()) throw BoundViolation("query batch is not on the 8-bit grid");
  const double bound = data::quantized_bound(config_.norm, config_.eps, queries.sample_size());
  const auto norms = data::perturbation_norms(queries, originals, config_.norm);
  for (std::size_t k = 0; k < norms.size(); ++k) {
    if (norms[k] > bound) {
      throw BoundViolation("query " + std::to_string(k) + " has perturbation " + std::to_string(norms[k]) +
                           " beyond " + std::to_string(bound));
    }
  }
}

StepResult QueryNet::step(std::span<const std::size_t> ids, const data::ImageBatch& x_best,
                          std::span<const double> loss_best, VictimOracle& oracle) {
  if (!bootstrapped_) throw std::logic_error("QueryNet: step before bootstrap");
  if (ids.empty()) throw std::invalid_argument("QueryNet: empty active set");
  if (ids.size() != x_best.batch() || ids.size() != loss_best.size()) {
    throw std::invalid_argument("QueryNet: ids, images and losses must align");
  }
  ++iteration_;
  const std::size_t calls_before = surrogate_calls();
  const auto originals = x_org_.gather(ids);
  std::vector<int> labels(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) labels[k] = labels_.at(ids[k]);

  const auto attackers_now = active_attackers(phase_, n_);
  std::vector<data::ImageBatch> candidates;
  candidates.reserve(attackers_now.size());
  for (AttackerId id : attackers_now) {
    if (id <= n_) {
      candidates.push_back(attackers::fgsm_candidate(ensemble_[id - 1], x_best, labels, originals, config_.norm,
                                                     config_.eps));
    } else if (id == squareplus_id(n_)) {
      std::vector<const attackers::LipschitzHistory*> views(ids.size(), nullptr);
      if (!config_.disable_squareplus) {
        for (std::size_t k = 0; k < ids.size(); ++k) views[k] = histories_[ids[k]] ? &*histories_[ids[k]] : nullptr;
      }
      candidates.push_back(attackers::squareplus_candidate(x_best, originals, ids, config_.norm, config_.eps,
                                                           squareplus_state_, views, config_.squareplus)
                               .candidates);
    } else {
      candidates.push_back(
          attackers::square_attack(x_best, originals, ids, config_.norm, config_.eps, square_state_));
    }
  }

  std::vector<AttackerId> chosen;
  if (attackers_now.size() == 1) {
    chosen.assign(ids.size(), attackers_now.front());
  } else {
    const auto w = evaluation_weights();
    chosen = select_by_losses(attackers_now, evaluate(candidates, labels, w), w, ids.size());
  }

  data::ImageBatch selected = x_best;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto pos = std::find(attackers_now.begin(), attackers_now.end(), chosen[k]) - attackers_now.begin();
    selected.assign_sample(k, candidates[static_cast<std::size_t>(pos)], k);
  }
  StepResult result;
  result.queries = data::quantize_8bit(selected);
  check_bounds(result.queries, originals);

  result.probs = oracle.query(result.queries);
  if (result.probs.rank() != 2 || result.probs.dim(0) != ids.size() ||
      result.probs.dim(1) != static_cast<std::size_t>(classes_)) {
    throw OracleError("oracle returned " + numgrad::shape_string(result.probs.shape()) + " for " +
                      std::to_string(ids.size()) + " queries");
  }
  result.losses = driver::margin_losses(result.probs, labels);
  store_.append(result.queries, result.probs, ids, iteration_);

  result.improved.resize(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    result.improved[k] = result.losses[k] < loss_best[k];
    if (histories_[ids[k]]) histories_[ids[k]]->add(result.queries.sample(k), result.losses[k]);
  }

  TraceRecord& trace = result.trace;
  trace.iteration = iteration_;
  trace.phase_before = phase_;
  trace.active = ids.size();

  if (phase_ != Phase::kSquareOnly && !config_.disable_nas) {
    for (const auto& report : models::fit_surrogates(ensemble_, store_, false, config_.fit)) {
      trace.fit_batches += report.batches;
    }
    ++refits_;
  }

  auto fresh = update_weights(chosen, result.improved, n_);
  if (config_.weight_ema > 0.0) {
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      fresh[i] = config_.weight_ema * weights_[i] + (1.0 - config_.weight_ema) * fresh[i];
    }
  }
  weights_ = std::move(fresh);
  if (phase_ == Phase::kSurrogatesAndSquarePlus) {
    const std::span<const double> surrogate_w(weights_.data(), n_);
    if (any_positive(surrogate_w)) frozen_eval_.assign(surrogate_w.begin(), surrogate_w.end());
  }
  const double best_surrogate = *std::max_element(weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(n_));
  trace.squareplus_leads = weights_[n_] >= best_surrogate;
  trace.square_leads = weights_[n_ + 1] >= std::max(best_surrogate, weights_[n_]);
  phase_ = advance_phase(phase_, weights_, n_);
  if (phase_ == Phase::kSquareOnly) {
    for (auto& h : histories_) h.reset();
  }

  for (std::size_t k = 0; k < ids.size(); ++k) {
    ++trace.selected[chosen[k]];
    if (result.improved[k]) ++trace.improved[chosen[k]];
  }
  trace.phase_after = phase_;
  trace.weights = weights_;
  if (!ensemble_.empty() && trace.phase_before != Phase::kSquareOnly &&
      (iteration_ <= config_.consistency_dense ||
       (config_.consistency_stride > 0 && iteration_ % config_.consistency_stride == 0))) {
    trace.consistency = mean_consistency();
    trace.bootstrap_consistency = bootstrap_consistency();
  }
  trace.surrogate_calls = surrogate_calls() - calls_before;
  result.chosen = std::move(chosen);
  return result;
}

}  // namespace querynet::core
