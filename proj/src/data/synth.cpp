#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "querynet/data/datasets.hpp"

namespace querynet::data {

LabeledSet synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 2) throw DataError("synth_dataset: need at least 2 classes");
  if (spec.size < 8) throw DataError("synth_dataset: image size must be at least 8");
  if (spec.per_class < 1) throw DataError("synth_dataset: per_class must be positive");

  const std::size_t n = static_cast<std::size_t>(spec.classes) * static_cast<std::size_t>(spec.per_class);
  const std::size_t side = static_cast<std::size_t>(spec.size);
  const double centre = (static_cast<double>(side) - 1.0) / 2.0;
  const double radius = 0.28 * static_cast<double>(side);
  const double base_sigma = 0.11 * static_cast<double>(side);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<float> pixels(n * side * side, 0.0f);
  std::vector<int> labels(n);
  std::vector<double> canvas(side * side);
  for (std::size_t s = 0; s < n; ++s) {
    const int label = static_cast<int>(s) % spec.classes;
    labels[s] = label;
    // Blob pair for the class: two spots a half-sector apart on a ring.
    const double theta = 2.0 * std::numbers::pi * label / spec.classes;
    const double spread = std::numbers::pi / spec.classes;
    const double shift_x = (unit(rng) - 0.5) * 0.16 * static_cast<double>(side);
    const double shift_y = (unit(rng) - 0.5) * 0.16 * static_cast<double>(side);
    std::fill(canvas.begin(), canvas.end(), 0.0);
    for (double angle : {theta, theta + spread}) {
      const double cx = centre + radius * std::cos(angle) + shift_x;
      const double cy = centre + radius * std::sin(angle) + shift_y;
      const double sigma = base_sigma * (0.85 + 0.3 * unit(rng));
      const double amplitude = spec.contrast * (0.8 + 0.4 * unit(rng));
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          canvas[y * side + x] += amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
      }
    }
    float* out = pixels.data() + s * side * side;
    for (std::size_t i = 0; i < side * side; ++i) {
      const double v = canvas[i] + spec.background + spec.noise * gauss(rng);
      out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  // Deterministic shuffle so that class order is mixed.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  LabeledSet set;
  set.classes = spec.classes;
  auto raw = ImageBatch::from_values(n, 1, side, side, std::move(pixels), false);
  set.images = quantize_8bit(raw.gather(order));
  set.labels.reserve(n);
  for (std::size_t i : order) set.labels.push_back(labels[i]);
  return set;
}

}  // namespace querynet::data
