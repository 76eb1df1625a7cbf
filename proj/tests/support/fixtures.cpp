#include "fixtures.hpp"

#include <numeric>
#include <vector>

namespace qn_test {

using namespace querynet;

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    data::SynthSpec train;
    train.seed = 1;
    auto trained = models::train_victim(data::synth_dataset(train), 7);
    data::SynthSpec test;
    test.seed = 1000;
    test.per_class = 67;
    const auto full = data::synth_dataset(test);
    std::vector<std::size_t> rows(200);
    std::iota(rows.begin(), rows.end(), 0);
    return Benchmark{std::move(trained.model), trained.held_out_accuracy, full.subset(rows)};
  }();
  return b;
}

data::LabeledSet attack_subset(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return benchmark().attack.subset(rows);
}

models::VictimModel constant_victim(int cls, const models::VictimArch& arch) {
  auto model = models::VictimModel::initialize(arch, 3);
  auto& params = model.mutable_params();
  params[4].fill(0.0f);
  params[5].fill(0.0f);
  params[5][static_cast<std::size_t>(cls)] = 12.0f;
  return model;
}

}  // namespace qn_test
