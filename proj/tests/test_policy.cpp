#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stlgame/io.hpp"
#include "stlgame/policy.hpp"
#include "stlgame/util.hpp"

using namespace stlgame;
using namespace stlgame::policy;

TEST_CASE("parameter count and deterministic initialization") {
  CHECK(PolicyParams::param_count(10, 32, 2) == 4u * 32 * 42 + 4u * 32 + 2u * 32 + 2);
  auto a = init_policy(10, 8, 2, {0.4, 1.5}, 123);
  auto b = init_policy(10, 8, 2, {0.4, 1.5}, 123);
  auto c = init_policy(10, 8, 2, {0.4, 1.5}, 124);
  CHECK(a.weights.size() == PolicyParams::param_count(10, 8, 2));
  CHECK(a.weights == b.weights);
  CHECK(a.weights != c.weights);
  // forget-gate biases are 1, all other biases 0
  const int in = 10 + 8;
  for (int gate = 0; gate < 4; ++gate)
    for (int i = 0; i < 8; ++i) {
      double bias = a.weights[static_cast<std::size_t>(gate) * (8 * in + 8) + 8 * in + i];
      CHECK(bias == (gate == 1 ? 1.0 : 0.0));
    }
  // fan-in scaled uniform weights
  double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (int i = 0; i < 8 * in; ++i) CHECK(std::abs(a.weights[i]) <= scale);
  CHECK_THROWS_AS(init_policy(0, 8, 2, {1, 1}, 1), PolicyError);
  CHECK_THROWS_AS(init_policy(10, 8, 2, {1.0}, 1), PolicyError);
}

TEST_CASE("actions respect per-dimension bounds") {
  std::vector<double> bounds{0.4, 1.5, 0.3};
  auto p = init_policy(6, 8, 3, bounds, 5);
  // push weights far from init so outputs approach the bounds
  Rng rng(77);
  for (double& w : p.weights) w += rng.uniform(-3.0, 3.0);
  auto st = make_state(p);
  std::vector<double> obs(6), act;
  for (int t = 0; t < 50; ++t) {
    for (double& o : obs) o = rng.uniform(-5.0, 5.0);
    policy_step<double>(p, p.weights, st, obs, act);
    REQUIRE(act.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(act[i]) <= bounds[i]);
  }
  CHECK_THROWS_AS(policy_step<double>(p, p.weights, st, std::vector<double>(4), act),
                  PolicyError);
}

TEST_CASE("recurrent state carries history") {
  auto p = init_policy(3, 8, 1, {1.0}, 9);
  std::vector<double> obs{0.5, -0.2, 0.1}, act1, act2;
  auto st = make_state(p);
  policy_step<double>(p, p.weights, st, obs, act1);
  policy_step<double>(p, p.weights, st, obs, act2);
  // same observation, different internal state -> different action
  CHECK(act1[0] != act2[0]);

  // replaying the same prefix reproduces the same actions
  Rng rng(31);
  std::vector<std::vector<double>> seq;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> o(3);
    for (double& v : o) v = rng.uniform(-1.0, 1.0);
    seq.push_back(o);
  }
  auto run = [&] {
    auto s = make_state(p);
    std::vector<double> a, out;
    for (const auto& o : seq) {
      policy_step<double>(p, p.weights, s, o, a);
      out.push_back(a[0]);
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("plain and taped policy step agree bit-for-bit") {
  auto p = init_policy(4, 6, 2, {0.4, 1.5}, 21);
  Rng rng(22);
  auto st = make_state(p);
  ad::Tape tape;
  auto sta = make_state(p, tape);
  std::vector<ad::Value> w;
  for (double v : p.weights) w.push_back(tape.var(v));
  std::vector<double> obs(4), act;
  std::vector<ad::Value> obsa, acta;
  for (int t = 0; t < 10; ++t) {
    obsa.clear();
    for (double& o : obs) {
      o = rng.uniform(-1.0, 1.0);
      obsa.push_back(tape.constant(o));
    }
    policy_step<double>(p, p.weights, st, obs, act);
    policy_step<ad::Value>(p, w, sta, obsa, acta);
    for (std::size_t i = 0; i < act.size(); ++i) CHECK(act[i] == acta[i].value());
  }
}

TEST_CASE("policy serialization round-trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "stlgame_test_policy";
  fs::create_directories(dir);
  auto p = init_policy(10, 8, 2, {0.4, 1.5}, 314);
  io::save_policy(p, dir / "p.json");
  auto q = io::load_policy(dir / "p.json");
  CHECK(q.obs_dim == p.obs_dim);
  CHECK(q.hidden == p.hidden);
  CHECK(q.act_dim == p.act_dim);
  CHECK(q.action_bound == p.action_bound);
  CHECK(q.weights == p.weights);  // exact: 17-significant-digit round trip

  MixturePolicy mix;
  for (int i = 0; i < 3; ++i)
    mix.components.push_back(
        std::make_shared<PolicyParams>(init_policy(10, 8, 2, {0.4, 1.5}, 400 + i)));
  mix.weights = {0.25, 0.5, 0.25};
  io::save_mixture(mix, dir / "mix.json", "mix");
  auto mix2 = io::load_mixture(dir / "mix.json");
  REQUIRE(mix2.components.size() == 3);
  CHECK(mix2.weights == mix.weights);
  for (int i = 0; i < 3; ++i)
    CHECK(mix2.components[i]->weights == mix.components[i]->weights);
  fs::remove_all(dir);
}

TEST_CASE("mixture validation") {
  MixturePolicy m;
  CHECK_THROWS_AS(m.validate(), PolicyError);
  m.components.push_back(std::make_shared<PolicyParams>(init_policy(2, 2, 1, {1.0}, 1)));
  m.weights = {0.5};
  CHECK_THROWS_AS(m.validate(), PolicyError);  // does not sum to 1
  m.weights = {1.0};
  CHECK_NOTHROW(m.validate());
  m.components.push_back(std::make_shared<PolicyParams>(init_policy(2, 2, 1, {1.0}, 2)));
  m.weights = {1.5, -0.5};
  CHECK_THROWS_AS(m.validate(), PolicyError);  // negative weight
}

TEST_CASE("mixture sampling statistics") {
  MixturePolicy m;
  for (int i = 0; i < 3; ++i)
    m.components.push_back(std::make_shared<PolicyParams>(init_policy(2, 2, 1, {1.0}, i)));
  m.weights = {0.2, 0.5, 0.3};
  Rng rng(606);
  const int N = 100000;
  std::array<int, 3> counts{0, 0, 0};
  for (int i = 0; i < N; ++i) counts[mixture_sample(m, rng)]++;
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(static_cast<double>(counts[i]) / N - m.weights[i]) < 0.01);
}

TEST_CASE("observation puts the observer's own slice first") {
  SliceMap s{0, 2, 2, 3};
  std::vector<double> joint{1, 2, 10, 20, 30};
  auto o0 = observe<double>(joint, s, 0);
  auto o1 = observe<double>(joint, s, 1);
  CHECK(o0 == std::vector<double>{1, 2, 10, 20, 30});
  CHECK(o1 == std::vector<double>{10, 20, 30, 1, 2});
}
