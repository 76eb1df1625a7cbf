#include "querynet/models/surrogate.hpp"

#include <cmath>

#include "querynet/numgrad/ops.hpp"

namespace querynet::models {

using numgrad::Shape;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

namespace {

// Weight tensors per layer: dense W/b, conv1x1 W/b, conv3x3 W/b.
constexpr std::size_t kTensorsPerLayer = 6;

std::vector<Shape> weight_shapes(const SurrogateArch& a) {
  const std::size_t d = a.sample_size();
  const std::size_t c = a.channels;
  std::vector<Shape> shapes;
  for (int l = 0; l < a.layers; ++l) {
    shapes.push_back({d, d});
    shapes.push_back({d});
    shapes.push_back({c, c, 1, 1});
    shapes.push_back({c});
    shapes.push_back({c, c, 3, 3});
    shapes.push_back({c});
  }
  shapes.push_back({d, static_cast<std::size_t>(a.classes)});
  shapes.push_back({static_cast<std::size_t>(a.classes)});
  return shapes;
}

Tensor normal(const Shape& shape, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

std::string_view to_string(CandidateOp op) {
  switch (op) {
    case CandidateOp::kSkip: return "skip";
    case CandidateOp::kDenseRelu: return "dense_relu";
    case CandidateOp::kConv1x1Relu: return "conv1x1_relu";
    case CandidateOp::kConv3x3Relu: return "conv3x3_relu";
  }
  return "unknown";
}

Surrogate::Surrogate(SurrogateArch arch, std::vector<Tensor> weights, std::vector<Tensor> alphas)
    : arch_(arch), weights_(std::move(weights)), alphas_(std::move(alphas)) {
  if (arch_.layers < 1 || arch_.classes < 2 || arch_.sample_size() == 0) {
    throw std::invalid_argument("surrogate: need at least one layer, two classes and a non-empty input");
  }
  const auto shapes = weight_shapes(arch_);
  if (weights_.size() != shapes.size() || alphas_.size() != static_cast<std::size_t>(arch_.layers)) {
    throw numgrad::ShapeError("surrogate", "parameter count does not match the architecture");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (weights_[i].shape() != shapes[i]) {
      throw numgrad::ShapeError("surrogate", "weight " + std::to_string(i) + " has shape " +
                                                 numgrad::shape_string(weights_[i].shape()) + ", expected " +
                                                 numgrad::shape_string(shapes[i]));
    }
  }
  for (const Tensor& a : alphas_) {
    if (a.shape() != Shape{kOpCount}) throw numgrad::ShapeError("surrogate", "alpha must have shape (4)");
  }
}

Surrogate Surrogate::initialize(const SurrogateArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = arch.sample_size();
  const std::size_t c = arch.channels;
  std::vector<Tensor> weights;
  for (int l = 0; l < arch.layers; ++l) {
    weights.push_back(normal({d, d}, std::sqrt(2.0f / static_cast<float>(d)), rng));
    weights.emplace_back(Shape{d}, 0.0f);
    weights.push_back(normal({c, c, 1, 1}, std::sqrt(2.0f / static_cast<float>(c)), rng));
    weights.emplace_back(Shape{c}, 0.0f);
    weights.push_back(normal({c, c, 3, 3}, std::sqrt(2.0f / static_cast<float>(9 * c)), rng));
    weights.emplace_back(Shape{c}, 0.0f);
  }
  weights.push_back(normal({d, static_cast<std::size_t>(arch.classes)}, std::sqrt(1.0f / static_cast<float>(d)), rng));
  weights.emplace_back(Shape{static_cast<std::size_t>(arch.classes)}, 0.0f);
  std::vector<Tensor> alphas;
  for (int l = 0; l < arch.layers; ++l) alphas.push_back(normal({kOpCount}, 1e-3f, rng));
  return Surrogate(arch, std::move(weights), std::move(alphas));
}

std::array<float, kOpCount> Surrogate::mixing(std::size_t layer) const {
  const Tensor& a = alphas_.at(layer);
  std::array<float, kOpCount> out{};
  float peak = a[0];
  for (std::size_t i = 1; i < kOpCount; ++i) peak = std::max(peak, a[i]);
  float total = 0.0f;
  for (std::size_t i = 0; i < kOpCount; ++i) total += out[i] = std::exp(a[i] - peak);
  for (float& v : out) v /= total;
  return out;
}

Var Surrogate::logits(Tape& tape, Var x, Bindings* bind) const {
  const Shape in = x.shape();
  if (in.size() != 4 || in[1] != arch_.channels || in[2] != arch_.height || in[3] != arch_.width) {
    throw numgrad::ShapeError("surrogate", "input " + numgrad::shape_string(in) + " does not match (B," +
                                               std::to_string(arch_.channels) + "," + std::to_string(arch_.height) +
                                               "," + std::to_string(arch_.width) + ")");
  }
  ++forward_calls_;
  auto lift = [&](const Tensor& t) { return bind ? tape.variable(t) : tape.constant(t); };
  std::vector<Var> w;
  std::vector<Var> a;
  for (const Tensor& t : weights_) w.push_back(lift(t));
  for (const Tensor& t : alphas_) a.push_back(lift(t));
  if (bind) {
    bind->weights = w;
    bind->alphas = a;
  }

  Var h = x;
  for (std::size_t l = 0; l < static_cast<std::size_t>(arch_.layers); ++l) {
    const Var* p = w.data() + l * kTensorsPerLayer;
    Var mix = numgrad::softmax(a[l]);
    Var dense_out = numgrad::reshape(numgrad::relu(numgrad::dense(h, p[0], p[1])), in);
    Var conv1_out = numgrad::relu(numgrad::conv2d(h, p[2], p[3]));
    Var conv3_out = numgrad::relu(numgrad::conv2d(h, p[4], p[5]));
    Var acc = numgrad::scale_by(h, mix, 0);
    acc = numgrad::add(acc, numgrad::scale_by(dense_out, mix, 1));
    acc = numgrad::add(acc, numgrad::scale_by(conv1_out, mix, 2));
    h = numgrad::add(acc, numgrad::scale_by(conv3_out, mix, 3));
  }
  const std::size_t head = static_cast<std::size_t>(arch_.layers) * kTensorsPerLayer;
  return numgrad::dense(h, w[head], w[head + 1]);
}

Tensor Surrogate::predict_logits(const data::ImageBatch& x) const {
  Tape tape;
  return logits(tape, tape.constant(x.tensor())).value();
}

Tensor Surrogate::predict_probs(const data::ImageBatch& x) const {
  Tape tape;
  return numgrad::softmax(logits(tape, tape.constant(x.tensor()))).value();
}

SurrogateEnsemble::SurrogateEnsemble(std::size_t count, const SurrogateArch& base, const EnsembleOptions& options,
                                     std::uint64_t seed) {
  if (options.layers.empty()) throw std::invalid_argument("surrogate ensemble: empty layer list");
  std::mt19937_64 seeder(seed);
  for (std::size_t j = 0; j < count; ++j) {
    SurrogateArch arch = base;
    arch.layers = options.layers[j % options.layers.size()];
    const std::uint64_t model_seed = seeder();
    slots_.push_back(SurrogateSlot{Surrogate::initialize(arch, model_seed), numgrad::Adam(options.weight_lr),
                                   numgrad::Adam(options.arch_lr), std::mt19937_64(seeder())});
  }
}

std::size_t SurrogateEnsemble::forward_calls() const noexcept {
  std::size_t total = 0;
  for (const auto& s : slots_) total += s.model.forward_calls();
  return total;
}

}  // namespace querynet::models
