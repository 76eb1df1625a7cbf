#include "querynet/models/training.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "querynet/numgrad/ops.hpp"

namespace querynet::models {

using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

std::size_t default_batch_size(std::size_t channels) { return channels == 1 ? 300 : 128; }

FitReport fit_surrogate(SurrogateSlot& slot, const QueryStore& store, bool first_iteration, const FitOptions& options) {
  const std::size_t records = store.size();
  if (records == 0) throw std::invalid_argument("fit_surrogates: query store is empty");
  const std::size_t cap = first_iteration ? options.first_batch_cap : options.batch_cap;
  const std::size_t batch =
      options.batch_size != 0 ? options.batch_size : default_batch_size(slot.model.arch().channels);

  std::uniform_int_distribution<std::size_t> pick(0, records - 1);
  std::vector<std::size_t> rows(batch);
  FitReport report;
  while (report.batches < cap) {
    for (auto& r : rows) r = pick(slot.rng);
    Tape tape;
    Surrogate::Bindings bind;
    Var prediction = slot.model.logits(tape, tape.constant(store.images(rows).tensor()), &bind);
    Var loss = numgrad::mse_loss(prediction, tape.constant(store.probs(rows)));
    tape.backward(loss);

    std::vector<Tensor> weight_grads, arch_grads;
    for (Var v : bind.weights) weight_grads.push_back(tape.grad(v));
    for (Var v : bind.alphas) arch_grads.push_back(tape.grad(v));
    slot.weight_optimizer.step(slot.model.mutable_weights(), weight_grads);
    slot.arch_optimizer.step(slot.model.mutable_alphas(), arch_grads);

    ++report.batches;
    report.final_loss = loss.value()[0];
    if (report.batches >= options.min_batches && report.final_loss < options.loss_threshold) {
      report.converged = true;
      break;
    }
  }
  return report;
}

std::vector<FitReport> fit_surrogates(SurrogateEnsemble& ensemble, const QueryStore& store, bool first_iteration,
                                      const FitOptions& options) {
  std::vector<FitReport> reports;
  for (std::size_t j = 0; j < ensemble.size(); ++j) {
    reports.push_back(fit_surrogate(ensemble.slot(j), store, first_iteration, options));
  }
  return reports;
}

double consistency(const Surrogate& surrogate, const QueryStore& store) {
  const std::size_t records = store.size();
  if (records == 0) throw std::invalid_argument("consistency: query store is empty");
  const std::size_t k = static_cast<std::size_t>(store.classes());
  constexpr std::size_t kChunk = 512;
  std::size_t agree = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < records; start += kChunk) {
    rows.resize(std::min(kChunk, records - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor logits = surrogate.predict_logits(store.images(rows));
    const Tensor victim = store.probs(rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const float* s = logits.data() + i * k;
      const float* v = victim.data() + i * k;
      agree += (std::max_element(s, s + k) - s) == (std::max_element(v, v + k) - v);
    }
  }
  return static_cast<double>(agree) / static_cast<double>(records);
}

}  // namespace querynet::models
