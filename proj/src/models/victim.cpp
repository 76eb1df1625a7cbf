#include "querynet/models/victim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "querynet/numgrad/ops.hpp"
#include "querynet/numgrad/optim.hpp"

namespace querynet::models {

using numgrad::Shape;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

namespace {

std::vector<Shape> victim_shapes(const VictimArch& a) {
  const std::size_t flat = a.conv2 * (a.height / 4) * (a.width / 4);
  return {{a.conv1, a.channels, 3, 3}, {a.conv1}, {a.conv2, a.conv1, 3, 3}, {a.conv2},
          {flat, static_cast<std::size_t>(a.classes)}, {static_cast<std::size_t>(a.classes)}};
}

Tensor he_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

VictimModel::VictimModel(VictimArch arch, std::vector<Tensor> params) : arch_(arch), params_(std::move(params)) {
  if (arch_.height < 4 || arch_.width < 4 || arch_.classes < 2) {
    throw std::invalid_argument("victim: input must be at least 4×4 with 2+ classes");
  }
  const auto shapes = victim_shapes(arch_);
  if (params_.size() != shapes.size()) throw numgrad::ShapeError("victim", "wrong parameter count");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params_[i].shape() != shapes[i]) {
      throw numgrad::ShapeError("victim", "parameter " + std::to_string(i) + " has shape " +
                                              numgrad::shape_string(params_[i].shape()) + ", expected " +
                                              numgrad::shape_string(shapes[i]));
    }
  }
}

VictimModel VictimModel::initialize(const VictimArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto shapes = victim_shapes(arch);
  std::vector<Tensor> params;
  params.push_back(he_normal(shapes[0], arch.channels * 9, rng));
  params.emplace_back(shapes[1], 0.0f);
  params.push_back(he_normal(shapes[2], arch.conv1 * 9, rng));
  params.emplace_back(shapes[3], 0.0f);
  params.push_back(he_normal(shapes[4], shapes[4][0], rng));
  params.emplace_back(shapes[5], 0.0f);
  return VictimModel(arch, std::move(params));
}

Var VictimModel::logits(Tape& tape, Var x, std::vector<Var>* param_vars) const {
  std::vector<Var> p;
  for (const Tensor& t : params_) p.push_back(param_vars ? tape.variable(t) : tape.constant(t));
  if (param_vars) *param_vars = p;
  Var h = numgrad::maxpool2x2(numgrad::relu(numgrad::conv2d(x, p[0], p[1])));
  h = numgrad::maxpool2x2(numgrad::relu(numgrad::conv2d(h, p[2], p[3])));
  return numgrad::dense(h, p[4], p[5]);
}

Tensor VictimModel::predict(const data::ImageBatch& x) const {
  if (x.channels() != arch_.channels || x.height() != arch_.height || x.width() != arch_.width) {
    throw numgrad::ShapeError("victim", "input (C,H,W)=(" + std::to_string(x.channels()) + "," +
                                            std::to_string(x.height()) + "," + std::to_string(x.width()) +
                                            ") does not match the model");
  }
  Tape tape;
  Var probs = numgrad::softmax(logits(tape, tape.constant(x.tensor())));
  return probs.value();
}

std::vector<int> VictimModel::classify(const data::ImageBatch& x) const {
  const Tensor probs = predict(x);
  const std::size_t k = static_cast<std::size_t>(arch_.classes);
  std::vector<int> out(x.batch());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    const float* row = probs.data() + b * k;
    out[b] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy(const VictimModel& model, const data::LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  const auto predicted = model.classify(data.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainedVictim train_victim(const data::LabeledSet& data, std::uint64_t seed, const VictimTrainOptions& options) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.classes));
  for (std::size_t i = 0; i < data.size(); ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
  for (const auto& rows : by_class) {
    if (rows.size() < options.min_per_class) {
      throw data::DataError("train_victim: every class needs at least " + std::to_string(options.min_per_class) +
                            " samples");
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_rows, held_rows;
  for (auto rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto held = static_cast<std::size_t>(std::ceil(options.held_out_fraction * static_cast<double>(rows.size())));
    held_rows.insert(held_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(held));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(held), rows.end());
  }
  const data::LabeledSet train = data.subset(train_rows);
  const data::LabeledSet held_out = data.subset(held_rows);

  VictimArch arch;
  arch.channels = data.images.channels();
  arch.height = data.images.height();
  arch.width = data.images.width();
  arch.classes = data.classes;
  VictimModel model = VictimModel::initialize(arch, rng());
  numgrad::Adam optimizer(options.learning_rate);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const data::LabeledSet batch = train.subset(rows);
      Tape tape;
      std::vector<Var> vars;
      Var loss = numgrad::cross_entropy(model.logits(tape, tape.constant(batch.images.tensor()), &vars), batch.labels);
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (Var v : vars) grads.push_back(tape.grad(v));
      optimizer.step(model.mutable_params(), grads);
    }
  }

  const double acc = accuracy(model, held_out);
  if (!(acc >= options.min_accuracy)) {
    throw TrainingDiverged("train_victim: held-out accuracy " + std::to_string(acc) + " below " +
                               std::to_string(options.min_accuracy),
                           acc);
  }
  return TrainedVictim{std::move(model), acc, train.size(), held_out.size()};
}

}  // namespace querynet::models
