#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stlgame/autodiff.hpp"
#include "stlgame/util.hpp"

using namespace stlgame;
using ad::Tape;
using ad::Value;

TEST_CASE("elementary forward values") {
  Tape t;
  CHECK(t.mul(t.var(3.0), t.var(4.0)).value() == 12.0);
  Value lse = t.logsumexp(std::vector<Value>{t.var(0.0), t.var(0.0)});
  CHECK(lse.value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(t.log(t.var(-1.0)), ad::TapeError);
  CHECK_THROWS_AS(t.div(t.var(1.0), t.constant(0.0)), ad::TapeError);
  CHECK_THROWS_AS(t.var(std::numeric_limits<double>::quiet_NaN()), ad::TapeError);
}

TEST_CASE("backward: product rule") {
  Tape t;
  Value x = t.var(3.0), y = t.var(4.0);
  auto g = t.backward(x * y);
  CHECK(g[0] == 4.0);
  CHECK(g[1] == 3.0);
}

TEST_CASE("backward: tanh at zero") {
  Tape t;
  Value x = t.var(0.0);
  auto g = t.backward(ad::tanh(x));
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward: logsumexp symmetry") {
  Tape t;
  Value x = t.var(1.7), y = t.var(1.7);
  auto g = t.backward(t.logsumexp(std::vector<Value>{x, y}));
  CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gradient of unreachable variable is zero") {
  Tape t;
  Value x = t.var(2.0);
  Value y = t.var(5.0);  // never used downstream
  auto g = t.backward(x * x);
  CHECK(g[0] == 4.0);
  CHECK(g[1] == 0.0);
  (void)y;
}

TEST_CASE("stale value after reset") {
  Tape t;
  Value x = t.var(1.0);
  t.reset();
  CHECK_THROWS_AS(t.backward(x), ad::TapeError);
  CHECK_THROWS_AS((void)x.value(), ad::TapeError);
}

TEST_CASE("logsumexp is overflow-safe") {
  Tape t;
  Value big = t.var(1000.0), small = t.var(0.0);
  Value out = t.logsumexp(std::vector<Value>{big, small});
  CHECK(std::isfinite(out.value()));
  CHECK(out.value() == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("grad_check: x squared") {
  double pt[] = {3.0};
  double err = ad::grad_check(
      [](Tape&, std::span<const Value> xs) { return xs[0] * xs[0]; }, pt, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: constant function") {
  double pt[] = {1.0, 2.0};
  double err = ad::grad_check(
      [](Tape& t, std::span<const Value>) { return t.constant(7.0); }, pt, 1e-5);
  CHECK(err == 0.0);
}

TEST_CASE("grad_check: every elementary op") {
  auto check_op = [](auto op, double x0, double tol = 1e-5) {
    double pt[] = {x0};
    double err = ad::grad_check(
        [&](Tape& t, std::span<const Value> xs) { return op(t, xs[0]); }, pt, 1e-6);
    CHECK(err <= tol);
  };
  check_op([](Tape& t, Value x) { return x + t.constant(2.0); }, 0.7);
  check_op([](Tape& t, Value x) { return t.constant(2.0) - x; }, 0.7);
  check_op([](Tape&, Value x) { return x * x; }, 0.7);
  check_op([](Tape& t, Value x) { return t.constant(3.0) / x; }, 0.7);
  check_op([](Tape&, Value x) { return -x; }, 0.7);
  check_op([](Tape&, Value x) { return ad::exp(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::log(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::tanh(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::sigmoid(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::sin(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::cos(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::tan(x); }, 0.7);
  check_op([](Tape&, Value x) { return ad::pow(x, 1.5); }, 0.7);
}

namespace {

// Random straight-line program over safe-domain ops.
Value random_program(Tape& t, std::span<const Value> xs, std::uint64_t seed, int depth) {
  Rng rng(seed);
  std::vector<Value> pool(xs.begin(), xs.end());
  for (int d = 0; d < depth; ++d) {
    Value a = pool[rng.index(pool.size())];
    Value b = pool[rng.index(pool.size())];
    switch (rng.index(7)) {
      case 0: pool.push_back(a + b); break;
      case 1: pool.push_back(a - b); break;
      case 2: pool.push_back(a * b); break;
      case 3: pool.push_back(ad::tanh(a)); break;
      case 4: pool.push_back(ad::sigmoid(a * b)); break;
      case 5: pool.push_back(t.logsumexp(std::vector<Value>{a, b})); break;
      case 6: pool.push_back(ad::sin(a) * ad::cos(b)); break;
    }
  }
  return pool.back();
}

}  // namespace

TEST_CASE("grad_check: random compositions depth 50") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(derive_seed(42, s));
    std::vector<double> pt(4);
    for (double& p : pt) p = rng.uniform(-1.5, 1.5);
    double err = ad::grad_check(
        [&](Tape& t, std::span<const Value> xs) {
          return random_program(t, xs, derive_seed(7, s), 50);
        },
        pt, 1e-6);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("determinism: identical programs give bit-identical results") {
  auto run = [] {
    Tape t;
    Value x = t.var(0.3), y = t.var(-1.2);
    Value out = ad::tanh(x * y) + ad::sigmoid(x - y) * ad::exp(y * 0.1);
    auto g = t.backward(out);
    return std::pair{out.value(), g};
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("linearity of backward") {
  // grad(a*f + b*g) == a*grad(f) + b*grad(g)
  double a = 2.5, b = -1.25;
  Tape t;
  Value x = t.var(0.4), y = t.var(1.1);
  Value f = ad::tanh(x * y);
  Value g = ad::sigmoid(x - y);
  Value combo = a * f + b * g;
  auto gc = t.backward(combo);
  auto gf = t.backward(f);
  auto gg = t.backward(g);
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("tape reuse across batches") {
  Tape t;
  for (int batch = 0; batch < 3; ++batch) {
    t.reset();
    Value x = t.var(1.0 + batch);
    auto g = t.backward(x * x);
    CHECK(g.size() == 1);
    CHECK(g[0] == 2.0 * (1.0 + batch));
  }
}
