#pragma once

#include <cstddef>
#include <vector>

#include "querynet/models/query_store.hpp"
#include "querynet/models/surrogate.hpp"

namespace querynet::models {

/// Early-stopping schedule for surrogate distillation.
struct FitOptions {
  /// Stop once a batch loss falls below this, but not before min_batches.
  double loss_threshold = 2.0;
  std::size_t min_batches = 30;
  std::size_t batch_cap = 100;
  std::size_t first_batch_cap = 1500;
  /// 0 selects 300 for single-channel data and 128 otherwise.
  std::size_t batch_size = 0;
};

struct FitReport {
  std::size_t batches = 0;
  double final_loss = 0.0;
  bool converged = false;
};

std::size_t default_batch_size(std::size_t channels);

/// Distils every surrogate towards the victim outputs recorded in `store`.
///
/// Each surrogate draws mini-batches uniformly with replacement and takes
/// one joint step on θ and α per batch against the per-batch mean of
/// per-sample squared errors between its logits and the victim
/// probabilities. Only the store is read; the victim is never touched.
std::vector<FitReport> fit_surrogates(SurrogateEnsemble& ensemble, const QueryStore& store, bool first_iteration,
                                      const FitOptions& options = {});

FitReport fit_surrogate(SurrogateSlot& slot, const QueryStore& store, bool first_iteration, const FitOptions& options);

/// Fraction of stored records whose surrogate argmax equals the victim argmax.
double consistency(const Surrogate& surrogate, const QueryStore& store);

}  // namespace querynet::models
