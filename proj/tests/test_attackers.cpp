#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "querynet/attackers/fgsm.hpp"
#include "querynet/attackers/square.hpp"
#include "querynet/attackers/squareplus.hpp"
#include "querynet/numgrad/ops.hpp"
#include "querynet/numgrad/tape.hpp"

using namespace querynet;
using attackers::Binding;
using attackers::LipschitzHistory;
using data::ImageBatch;
using data::Norm;
using numgrad::Shape;
using numgrad::Tensor;

namespace {

ImageBatch filled(std::size_t b, std::size_t c, std::size_t h, std::size_t w, float v) {
  return ImageBatch::from_values(b, c, h, w, std::vector<float>(b * c * h * w, v), false);
}

// Pixels in [lo, hi] so that ±eps offsets never hit the [0,1] clamp.
ImageBatch random_batch(std::size_t b, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                        float lo = 0.2f, float hi = 0.8f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(b * c * h * w);
  for (auto& x : v) x = u(rng);
  return ImageBatch::from_values(b, c, h, w, std::move(v), false);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<float> row(const ImageBatch& x, std::size_t k) {
  const auto s = x.sample(k);
  return {s.begin(), s.end()};
}

LipschitzHistory history_of(const std::vector<std::vector<float>>& q, const std::vector<double>& l) {
  LipschitzHistory h(q.at(0).size());
  for (std::size_t i = 0; i < q.size(); ++i) h.add(q[i], l[i]);
  return h;
}

models::SurrogateArch arch8() {
  models::SurrogateArch a;
  a.height = a.width = 8;
  a.layers = 2;
  return a;
}

}  // namespace

TEST_CASE("fgsm linf saturating step") {
  const auto x = filled(1, 1, 4, 4, 0.5f);
  const auto out = attackers::fgsm_step(x, x, Tensor(Shape{1, 1, 4, 4}, 1.0f), Norm::kLinf, 0.1f);
  for (float v : out.values()) CHECK(v == doctest::Approx(0.6f));
}

TEST_CASE("fgsm linf with zero gradient leaves x unchanged") {
  const auto x_org = random_batch(2, 1, 4, 4, 1);
  const auto x = random_batch(2, 1, 4, 4, 2, 0.25f, 0.75f);
  const auto in_ball = data::project(x, x_org, Norm::kLinf, 0.1f);
  const auto out = attackers::fgsm_step(in_ball, x_org, Tensor(Shape{2, 1, 4, 4}, 0.0f), Norm::kLinf, 0.1f);
  CHECK(out == in_ball);
}

TEST_CASE("fgsm l2 unit-direction step") {
  const auto x = filled(1, 1, 2, 2, 0.0f);
  Tensor g(Shape{1, 1, 2, 2}, 0.0f);
  g[0] = 1.0f;
  const auto out = attackers::fgsm_step(x, x, g, Norm::kL2, 1.0f);
  CHECK(out.values()[0] == doctest::Approx(1.0f));
  for (std::size_t i = 1; i < 4; ++i) CHECK(out.values()[i] == 0.0f);
}

TEST_CASE("fgsm l2 with zero gradient returns that sample unchanged") {
  const auto x = random_batch(2, 1, 2, 2, 3);
  Tensor g(Shape{2, 1, 2, 2}, 0.0f);
  g[4] = 1.0f;  // only the second sample moves
  const auto out = attackers::fgsm_step(x, x, g, Norm::kL2, 0.5f);
  CHECK(row(out, 0) == row(x, 0));
  CHECK(row(out, 1) != row(x, 1));
}

TEST_CASE("fgsm linf candidates put every unclamped pixel on the bound") {
  const auto s = models::Surrogate::initialize(arch8(), 4);
  const auto x_org = random_batch(3, 1, 8, 8, 5);
  const std::vector<int> labels{0, 1, 2};
  const float eps = 0.1f;
  const auto g = attackers::adversarial_gradient(s, x_org, labels);
  const auto out = attackers::fgsm_candidate(s, x_org, labels, x_org, Norm::kLinf, eps);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0f) continue;
    CHECK(std::abs(out.values()[i] - x_org.values()[i]) == doctest::Approx(eps).epsilon(1e-5));
  }
}

TEST_CASE("fgsm direction is the gradient of the negated surrogate margin") {
  const auto s = models::Surrogate::initialize(arch8(), 6);
  const auto x = random_batch(1, 1, 8, 8, 7);
  const std::vector<int> labels{1};
  const auto g = attackers::adversarial_gradient(s, x, labels);
  auto objective = [&](const ImageBatch& img) {
    const Tensor p = s.predict_probs(img);
    double rival = -1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (k != 1) rival = std::max(rival, static_cast<double>(p[k]));
    }
    return -(p[1] - rival);
  };
  const float h = 1e-2f;
  for (std::size_t i : {0ul, 9ul, 27ul, 63ul}) {
    auto up = x, down = x;
    up.mutable_values()[i] += h;
    down.mutable_values()[i] -= h;
    const double numeric = (objective(up) - objective(down)) / (2.0 * h);
    CHECK(g[i] == doctest::Approx(numeric).epsilon(5e-2).scale(1e-2));
  }
}

TEST_CASE("every attacker respects the ball and the pixel range") {
  const auto s = models::Surrogate::initialize(arch8(), 7);
  const auto x_org = random_batch(4, 1, 8, 8, 8, 0.0f, 1.0f);
  const auto ids = iota(4);
  const std::vector<int> labels{0, 1, 2, 0};
  for (Norm norm : {Norm::kLinf, Norm::kL2}) {
    const float eps = norm == Norm::kLinf ? 0.15f : 1.0f;
    attackers::SquareState sq({4, {}, 1}), sp({4, {}, 2});
    ImageBatch x = x_org;
    for (int it = 0; it < 30; ++it) {
      const auto fg = attackers::fgsm_candidate(s, x, labels, x_org, norm, eps);
      const auto a = attackers::square_attack(x, x_org, ids, norm, eps, sq);
      const auto b = attackers::squareplus_candidate(
          x, x_org, ids, norm, eps, sp, [](std::size_t, std::span<const float>) { return true; }, 50);
      for (const auto* c : {&fg, &a, &b.candidates}) {
        for (double n : data::perturbation_norms(*c, x_org, norm)) CHECK(n <= eps + 1e-5);
        for (float v : c->values()) CHECK((v >= 0.0f && v <= 1.0f));
      }
      x = it % 2 ? a : b.candidates;
    }
  }
}

TEST_CASE("square side from the coordinate fraction") {
  CHECK(attackers::square_side(0.05f, 16, 16) == 4);
  CHECK(attackers::square_side(0.05f, 4, 4) == 1);
  CHECK(attackers::square_side(1.0f, 16, 8) == 8);
  CHECK(attackers::square_side(1e-6f, 16, 16) == 1);
}

TEST_CASE("square schedule halves p after each breakpoint") {
  attackers::SquareSchedule sched;
  CHECK(sched.fraction(0) == 0.05f);
  CHECK(sched.fraction(10) == 0.05f);
  CHECK(sched.fraction(11) == 0.025f);
  CHECK(sched.fraction(51) == 0.0125f);
  CHECK(sched.fraction(9000) == doctest::Approx(0.05f / 256.0f));
  attackers::SquareState state(1, sched, 0);
  const auto x_org = random_batch(1, 1, 16, 16, 9);
  auto x = attackers::square_init(x_org, iota(1), Norm::kLinf, 0.1f, state);
  for (int i = 0; i < 11; ++i) x = attackers::square_candidate(x, x_org, iota(1), Norm::kLinf, 0.1f, state);
  CHECK(state.iteration(0) == 11);
  CHECK(state.p(0) == 0.025f);
}

TEST_CASE("square init offsets are constant down each column") {
  const auto x_org = random_batch(2, 3, 8, 8, 10);
  attackers::SquareState state(2, {}, 3);
  const float eps = 0.1f;
  const auto x = attackers::square_init(x_org, iota(2), Norm::kLinf, eps, state);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t col = 0; col < 8; ++col) {
        const std::size_t top = (c * 8) * 8 + col;
        const float d0 = x.sample(k)[top] - x_org.sample(k)[top];
        CHECK(std::abs(d0) == doctest::Approx(eps));
        for (std::size_t r = 1; r < 8; ++r) {
          const std::size_t i = (c * 8 + r) * 8 + col;
          CHECK(x.sample(k)[i] - x_org.sample(k)[i] == doctest::Approx(d0).epsilon(1e-5));
        }
      }
    }
  }
  for (double n : data::perturbation_norms(x, x_org, Norm::kLinf)) CHECK(n <= eps + 1e-6);
  CHECK(state.initialized(0));
  CHECK_THROWS_AS(attackers::square_init(x_org, iota(2), Norm::kLinf, eps, state), attackers::AlreadyInitialized);
}

TEST_CASE("square init for l2 stays inside the ball") {
  const auto x_org = random_batch(2, 1, 16, 16, 11);
  attackers::SquareState state(2, {}, 4);
  const auto x = attackers::square_init(x_org, iota(2), Norm::kL2, 1.0f, state);
  for (double n : data::perturbation_norms(x, x_org, Norm::kL2)) CHECK(n <= 1.0 + 1e-5);
}

TEST_CASE("square candidate needs an initialized sample") {
  const auto x_org = random_batch(1, 1, 8, 8, 12);
  attackers::SquareState state(1, {}, 5);
  CHECK_THROWS_AS(attackers::square_candidate(x_org, x_org, iota(1), Norm::kLinf, 0.1f, state),
                  attackers::NotInitialized);
}

TEST_CASE("square candidate changes one square and sets it to ±eps") {
  const auto x_org = random_batch(1, 3, 16, 16, 13);
  attackers::SquareState state(1, {}, 6);
  const float eps = 0.1f;
  auto x = attackers::square_init(x_org, iota(1), Norm::kLinf, eps, state);
  for (int it = 0; it < 200; ++it) {
    const std::size_t h = attackers::square_side(state.p(0), 16, 16);
    const auto next = attackers::square_candidate(x, x_org, iota(1), Norm::kLinf, eps, state);
    std::size_t changed = 0, y0 = 16, y1 = 0, x0 = 16, x1 = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t q = 0; q < 16; ++q) {
          const std::size_t i = (c * 16 + r) * 16 + q;
          if (next.values()[i] == x.values()[i]) continue;
          ++changed;
          y0 = std::min(y0, r), y1 = std::max(y1, r), x0 = std::min(x0, q), x1 = std::max(x1, q);
          CHECK(std::abs(next.values()[i] - x_org.values()[i]) == doctest::Approx(eps));
        }
      }
    }
    CHECK(changed <= h * h * 3);
    if (changed > 0) {
      CHECK(y1 - y0 + 1 <= h);
      CHECK(x1 - x0 + 1 <= h);
    }
    x = next;
  }
}

TEST_CASE("potential maximizer examples") {
  const std::vector<std::vector<float>> q{{0.0f, 0.0f}, {1.0f, 0.0f}};
  const auto h = history_of(q, {1.0, 0.5});
  CHECK(h.lipschitz() == doctest::Approx(0.5));
  CHECK(attackers::potential_maximizer(std::vector<float>{-2.0f, 0.0f}, h, 0.7));
  CHECK_FALSE(attackers::potential_maximizer(std::vector<float>{-0.5f, 0.0f}, h, 0.7));
  const auto single = history_of({{0.0f, 0.0f}}, {1.0});
  CHECK(attackers::potential_maximizer(std::vector<float>{0.0f, 0.0f}, single, 0.7));
  const LipschitzHistory empty(2);
  CHECK(attackers::potential_maximizer(std::vector<float>{0.0f, 0.0f}, empty, 0.7));
}

TEST_CASE("potential maximizer skips zero-distance pairs") {
  const auto h = history_of({{0.0f}, {0.0f}, {2.0f}}, {1.0, 0.2, 0.0});
  CHECK(h.lipschitz() == doctest::Approx(0.5));
}

TEST_CASE("potential maximizer agrees with direct evaluation on random histories") {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> size(0, 12), dim(1, 6);
  std::uniform_real_distribution<float> coord(0.0f, 1.0f);
  std::uniform_real_distribution<double> loss(-0.2, 1.0), beta(0.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = dim(rng);
    std::vector<std::vector<float>> q(size(rng));
    std::vector<double> l(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i].resize(d);
      for (auto& v : q[i]) v = coord(rng);
      l[i] = loss(rng);
    }
    LipschitzHistory h(d);
    for (std::size_t i = 0; i < q.size(); ++i) h.add(q[i], l[i]);
    std::vector<float> x(d);
    for (auto& v : x) v = coord(rng);
    const double b = beta(rng);
    CHECK(attackers::potential_maximizer(x, h, b, Binding::kMinDistance) ==
          qn_test::oracle::potential_maximizer(x, q, l, b, false));
    CHECK(attackers::potential_maximizer(x, h, b, Binding::kEveryPoint) ==
          qn_test::oracle::potential_maximizer(x, q, l, b, true));
  }
}

TEST_CASE("square+ with a short history behaves as one square candidate") {
  const auto x_org = random_batch(2, 1, 16, 16, 15);
  attackers::SquareState a(2, {}, 7), b(2, {}, 7);
  const auto xa = attackers::square_init(x_org, iota(2), Norm::kLinf, 0.1f, a);
  const auto xb = attackers::square_init(x_org, iota(2), Norm::kLinf, 0.1f, b);
  REQUIRE(xa == xb);
  LipschitzHistory one(256);
  one.add(xa.sample(1), 0.4);
  const std::vector<const LipschitzHistory*> hist{nullptr, &one};
  const auto plus = attackers::squareplus_candidate(xa, x_org, iota(2), Norm::kLinf, 0.1f, a, hist);
  const auto plain = attackers::square_candidate(xb, x_org, iota(2), Norm::kLinf, 0.1f, b);
  CHECK(plus.candidates == plain);
  CHECK(plus.proposals == std::vector<std::size_t>{1, 1});
  CHECK(a.iteration(0) == b.iteration(0));
}

TEST_CASE("square+ with a predicate that always refuses draws exactly M proposals") {
  const auto x_org = random_batch(3, 1, 16, 16, 16);
  attackers::SquareState state(3, {}, 8);
  const auto x = attackers::square_init(x_org, iota(3), Norm::kLinf, 0.1f, state);
  std::vector<std::size_t> calls(3, 0);
  std::vector<std::vector<float>> last(3);
  const auto result = attackers::squareplus_candidate(
      x, x_org, iota(3), Norm::kLinf, 0.1f, state,
      [&](std::size_t row, std::span<const float> proposal) {
        ++calls[row];
        last[row].assign(proposal.begin(), proposal.end());
        return false;
      },
      50);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(calls[k] == 50);
    CHECK(result.proposals[k] == 50);
    CHECK(row(result.candidates, k) == last[k]);
    CHECK(state.iteration(k) == 1);
  }
}

TEST_CASE("square+ returns a candidate that passes the filter when one is found") {
  const auto x_org = random_batch(1, 1, 16, 16, 17);
  attackers::SquareState state(1, {}, 9);
  auto x = attackers::square_init(x_org, iota(1), Norm::kLinf, 0.1f, state);
  LipschitzHistory h(256);
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> loss(0.1, 0.9);
  std::size_t accepted = 0;
  for (int it = 0; it < 40; ++it) {
    const std::vector<const LipschitzHistory*> hist{&h};
    const auto r = attackers::squareplus_candidate(x, x_org, iota(1), Norm::kLinf, 0.1f, state, hist);
    const auto cand = row(r.candidates, 0);
    if (r.proposals[0] < 50) {
      ++accepted;
      CHECK(attackers::potential_maximizer(cand, h, 0.7));
    }
    h.add(cand, loss(rng));
    x = r.candidates;
  }
  CHECK(accepted > 0);
}

TEST_CASE("square+ initializes fresh samples without drawing proposals") {
  const auto x_org = random_batch(2, 1, 8, 8, 19);
  attackers::SquareState state(2, {}, 10);
  const std::vector<const LipschitzHistory*> hist{nullptr, nullptr};
  const auto r = attackers::squareplus_candidate(x_org, x_org, iota(2), Norm::kLinf, 0.1f, state, hist);
  CHECK(r.proposals == std::vector<std::size_t>{0, 0});
  CHECK(state.initialized(0));
  CHECK(state.iteration(0) == 0);
}
