#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "querynet/numgrad/ops.hpp"
#include "querynet/numgrad/optim.hpp"
#include "querynet/numgrad/tape.hpp"

using namespace querynet::numgrad;

namespace {

Tensor vec(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor mat(std::size_t r, std::size_t c, std::vector<float> v) { return Tensor(Shape{r, c}, std::move(v)); }

}  // namespace

TEST_CASE("dense with identity weights passes the input through") {
  Tape t;
  auto y = dense(t.constant(mat(1, 2, {3, 5})), t.constant(mat(2, 2, {1, 0, 0, 1})), t.constant(vec({0, 0})));
  CHECK(y.value().shape() == Shape{1, 2});
  CHECK(y.value()[0] == 3.0f);
  CHECK(y.value()[1] == 5.0f);
}

TEST_CASE("relu clips negatives") {
  Tape t;
  auto y = relu(t.constant(vec({-1, 0, 2})));
  CHECK(y.value() == vec({0, 0, 2}));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  auto y = softmax(t.constant(vec({0, 0, 0})));
  for (float v : y.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one and stay in [0,1]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 10.0f);
  Tensor x(Shape{20, 7});
  for (auto& v : x.values()) v = n(rng);
  Tape t;
  const Tensor y = softmax(t.constant(x)).value();
  for (std::size_t r = 0; r < 20; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y[r * 7 + c] >= 0.0f);
      CHECK(y[r * 7 + c] <= 1.0f);
      total += y[r * 7 + c];
    }
    CHECK(std::abs(total - 1.0) <= 1e-5);
  }
}

TEST_CASE("gradient of sum is all ones") {
  Tape t;
  auto x = t.variable(Tensor(Shape{2, 3}, std::vector<float>{1, -2, 3, 0, 5, 6}));
  t.backward(sum(x));
  for (float g : t.grad(x).values()) CHECK(g == 1.0f);
}

TEST_CASE("gradient of half squared norm is the input") {
  Tape t;
  auto x = t.variable(vec({3, -4}));
  t.backward(scale(sum(mul(x, x)), 0.5f));
  CHECK(t.grad(x) == vec({3, -4}));
}

TEST_CASE("two-layer MLP gradient matches central differences") {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 5) {
    const auto program = qn_test::random_program(rng);
    if (program.family != "mlp-mse" && program.family != "mlp-xent") continue;
    const auto result = qn_test::check_gradients(program, 1e-3);
    if (result.crosses_kink) continue;
    CHECK(result.max_relative_error < 1e-3);
    ++checked;
  }
}

TEST_CASE("random graphs: engine forward agrees with the double interpreter") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto program = qn_test::random_program(rng);
    const double ref = qn_test::reference_loss(program);
    CHECK(std::abs(qn_test::engine_loss(program) - ref) <= 1e-4 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("random graphs: gradients match central differences") {
  std::mt19937_64 rng(13);
  int checked = 0;
  while (checked < 100) {
    const auto program = qn_test::random_program(rng);
    const auto result = qn_test::check_gradients(program, 1e-3);
    if (result.crosses_kink) continue;
    INFO(program.family);
    CHECK(result.max_relative_error < 1e-3);
    ++checked;
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape t;
  auto x = t.variable(vec({1, 2}));
  CHECK_THROWS_AS(t.backward(relu(x)), NonScalarLoss);
}

TEST_CASE("shape mismatch names the primitive") {
  Tape t;
  auto x = t.constant(mat(1, 3, {1, 2, 3}));
  auto w = t.constant(mat(2, 2, {1, 0, 0, 1}));
  auto b = t.constant(vec({0, 0}));
  try {
    dense(x, w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.primitive() == "dense");
    CHECK(std::string(e.what()).find("(1,3)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(t.constant(vec({1})), t.constant(vec({1, 2}))), ShapeError);
  CHECK_THROWS_AS(conv2d(t.constant(Tensor(Shape{1, 1, 4, 4})), t.constant(Tensor(Shape{1, 1, 2, 2})),
                         t.constant(vec({0}))),
                  ShapeError);
}

TEST_CASE("sgd step") {
  SUBCASE("p=1, g=2, lr=0.1 gives 0.8") {
    std::vector<Tensor> p{vec({1.0f})};
    Sgd(0.1f).step(p, {vec({2.0f})});
    CHECK(p[0][0] == doctest::Approx(0.8f));
  }
  SUBCASE("zero gradient leaves p unchanged") {
    std::vector<Tensor> p{vec({1.5f, -2.0f})};
    Sgd(0.1f).step(p, {vec({0.0f, 0.0f})});
    CHECK(p[0] == vec({1.5f, -2.0f}));
  }
  SUBCASE("zero learning rate leaves p unchanged") {
    std::vector<Tensor> p{vec({1.5f, -2.0f})};
    Sgd(0.0f).step(p, {vec({3.0f, 4.0f})});
    CHECK(p[0] == vec({1.5f, -2.0f}));
  }
  SUBCASE("misaligned gradient is a shape error") {
    std::vector<Tensor> p{vec({1.0f})};
    CHECK_THROWS_AS(Sgd(0.1f).step(p, {vec({1.0f, 2.0f})}), ShapeError);
  }
}

TEST_CASE("adam accumulators follow parameter shapes") {
  std::vector<Tensor> p{vec({1.0f, 2.0f})};
  Adam adam(0.1f);
  adam.step(p, {vec({1.0f, -1.0f})});
  CHECK(adam.steps() == 1);
  // First Adam step moves each coordinate by lr against the gradient sign.
  CHECK(p[0][0] == doctest::Approx(0.9f));
  CHECK(p[0][1] == doctest::Approx(2.1f));
  std::vector<Tensor> other{vec({1.0f})};
  CHECK_THROWS_AS(adam.step(other, {vec({1.0f})}), ShapeError);
}

TEST_CASE("identical programs give bit-identical results") {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 10; ++i) {
    const auto pa = qn_test::random_program(a);
    const auto pb = qn_test::random_program(b);
    CHECK(qn_test::engine_loss(pa) == qn_test::engine_loss(pb));
  }
}
