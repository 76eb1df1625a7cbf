#pragma once

#include <cstddef>

#include "querynet/data/datasets.hpp"
#include "querynet/models/victim.hpp"

namespace qn_test {

/// The default desk benchmark: synth K=3 16×16, victim seed 7 trained on
/// synth seed 1, attacked on the first 200 samples of synth seed 1000.
struct Benchmark {
  querynet::models::VictimModel victim;
  double held_out_accuracy;
  querynet::data::LabeledSet attack;
};

/// Trained once per process.
const Benchmark& benchmark();

/// Leading `n` samples of the benchmark attack set.
querynet::data::LabeledSet attack_subset(std::size_t n);

/// Victim that answers `cls` with near certainty for every input.
querynet::models::VictimModel constant_victim(int cls, const querynet::models::VictimArch& arch = {});

}  // namespace qn_test
