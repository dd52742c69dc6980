#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stlgame/dynamics.hpp"
#include "stlgame/rollout.hpp"
#include "stlgame/scenarios.hpp"
#include "stlgame/semantics.hpp"
#include "stlgame/util.hpp"

#include "diff_check.hpp"

using namespace stlgame;
using namespace stlgame::dyn;

TEST_CASE("drone system matrices") {
  // velocity rows are identity; position rows add dt * velocity
  for (int i = 0; i < 3; ++i) {
    CHECK(kDroneA[i][i] == 1.0);
    CHECK(kDroneA[i + 3][i] == 0.2);
    CHECK(kDroneA[i + 3][i + 3] == 1.0);
  }
  CHECK(kDroneB[0][0] == 1.96);
  CHECK(kDroneB[1][1] == -1.96);
  CHECK(kDroneB[2][2] == 0.4);
  CHECK(kDroneB[3][0] == 0.196);
  CHECK(kDroneB[4][1] == -0.196);
  CHECK(kDroneB[5][2] == 0.04);
}

TEST_CASE("vehicle explicit Euler step, hand-computed") {
  VehicleParams p;
  std::array<double, 5> x{0.0, 0.0, 0.1, 1.0, 0.5};
  std::array<double, 2> u{0.2, 1.0};
  auto n = vehicle_step(x, u, p, 0.1);
  CHECK(n[0] == doctest::Approx(0.1 * std::cos(0.5)).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(0.1 * std::sin(0.5)).epsilon(1e-15));
  CHECK(n[2] == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(n[3] == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(n[4] == doctest::Approx(0.5 + 0.1 * (1.0 / 0.32) * std::tan(0.1)).epsilon(1e-15));
  CHECK_THROWS_AS(vehicle_step(x, u, p, 0.0), DynamicsError);
}

TEST_CASE("vehicle saturation holds under fuzzed inputs") {
  VehicleParams p;
  Rng rng(42);
  std::array<double, 5> x{0, 0, 0, 0, 0};
  for (int i = 0; i < 10000; ++i) {
    std::array<double, 2> u{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
    x = vehicle_step(x, u, p, 0.1);
    CHECK(x[2] >= p.steer_min);
    CHECK(x[2] <= p.steer_max);
    CHECK(x[3] >= p.v_min);
    CHECK(x[3] <= p.v_max);
    for (double v : x) CHECK(std::isfinite(v));
  }
  // steering rate limited: one step can move delta by at most rate*dt
  std::array<double, 5> y{0, 0, 0.0, 1.0, 0.0};
  auto n = vehicle_step(y, {100.0, 0.0}, p, 0.1);
  CHECK(n[2] == doctest::Approx(p.steer_rate_max * 0.1).epsilon(1e-15));
}

TEST_CASE("drone input clamping and linearity inside bounds") {
  DroneParams p;
  Rng rng(7);
  // clamping
  std::array<double, 6> x{0, 0, 0, 0, 0, 0};
  auto n = drone_step(x, {5.0, -5.0, 5.0}, p);
  auto m = drone_step(x, {p.roll_max, -p.pitch_max, p.thrust_max}, p);
  for (int i = 0; i < 6; ++i) CHECK(n[i] == m[i]);
  // superposition when all inputs stay inside bounds
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 6> x1, x2, xs;
    std::array<double, 3> u1, u2, us;
    for (int i = 0; i < 6; ++i) {
      x1[i] = rng.uniform(-1.0, 1.0);
      x2[i] = rng.uniform(-1.0, 1.0);
      xs[i] = x1[i] + x2[i];
    }
    for (int i = 0; i < 3; ++i) {
      u1[i] = rng.uniform(-0.1, 0.1);
      u2[i] = rng.uniform(-0.1, 0.1);
      us[i] = u1[i] + u2[i];
    }
    auto a = drone_step(x1, u1, p);
    auto b = drone_step(x2, u2, p);
    auto s = drone_step(xs, us, p);
    for (int i = 0; i < 6; ++i)
      CHECK(s[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-12));
  }
}

TEST_CASE("plain and taped dynamics agree bit-for-bit") {
  VehicleParams vp;
  DroneParams dp;
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    ad::Tape tape;
    std::array<double, 5> x;
    std::array<double, 2> u;
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    for (auto& v : u) v = rng.uniform(-2.0, 2.0);
    std::array<ad::Value, 5> xa;
    std::array<ad::Value, 2> ua;
    for (int i = 0; i < 5; ++i) xa[i] = tape.var(x[i]);
    for (int i = 0; i < 2; ++i) ua[i] = tape.var(u[i]);
    auto n = vehicle_step(x, u, vp, 0.1);
    auto na = vehicle_step(xa, ua, vp, 0.1);
    for (int i = 0; i < 5; ++i) CHECK(n[i] == na[i].value());

    std::array<double, 6> y;
    std::array<double, 3> w;
    for (auto& v : y) v = rng.uniform(-2.0, 2.0);
    for (auto& v : w) v = rng.uniform(-2.0, 2.0);
    std::array<ad::Value, 6> ya;
    std::array<ad::Value, 3> wa;
    for (int i = 0; i < 6; ++i) ya[i] = tape.var(y[i]);
    for (int i = 0; i < 3; ++i) wa[i] = tape.var(w[i]);
    auto d = drone_step(y, w, dp);
    auto da = drone_step(ya, wa, dp);
    for (int i = 0; i < 6; ++i) CHECK(d[i] == da[i].value());
  }
}

TEST_CASE("taped vehicle step gradient matches finite differences") {
  VehicleParams p;
  std::array<double, 5> x{0.3, -0.2, 0.1, 1.2, 0.4};
  std::array<double, 2> u{0.1, 0.5};
  // all inputs strictly inside saturation so the map is differentiable
  auto f = [&](ad::Tape&, std::span<const ad::Value> q) {
    std::array<ad::Value, 5> xx{q[0], q[1], q[2], q[3], q[4]};
    std::array<ad::Value, 2> uu{q[5], q[6]};
    auto n = vehicle_step(xx, uu, p, 0.1);
    return n[0] + 2.0 * n[1] + 3.0 * n[2] + 4.0 * n[3] + 5.0 * n[4];
  };
  (void)x;
  (void)u;
  std::vector<double> point{0.3, -0.2, 0.1, 1.2, 0.4, 0.1, 0.5};
  CHECK(ad::grad_check(f, point, 1e-6) <= 1e-7);
}

TEST_CASE("rollout: plain and differentiable traces coincide") {
  auto g = scenario::make_game("vehicles");
  g.optim.hidden = 4;
  auto pi0 = policy::init_policy(g.state_dim(), 4, g.action_dim(), g.action_bounds(), 1);
  auto pi1 = policy::init_policy(g.state_dim(), 4, g.action_dim(), g.action_bounds(), 2);
  auto s0 = g.joint_initial(0);
  int T = 10;
  auto plain = sim::rollout_plain(g, pi0, pi1, s0, T);
  REQUIRE(plain.trace.states.size() == static_cast<std::size_t>(T + 1));

  for (int agent = 0; agent < 2; ++agent) {
    ad::Tape tape;
    const auto& dp = agent == 0 ? pi0 : pi1;
    const auto& op = agent == 0 ? pi1 : pi0;
    std::vector<ad::Value> w;
    for (double v : dp.weights) w.push_back(tape.var(v));
    auto diff = sim::rollout_diff(g, tape, dp, w, op, agent, s0, T);
    REQUIRE(diff.plain.states.size() == plain.trace.states.size());
    for (std::size_t t = 0; t < plain.trace.states.size(); ++t)
      for (std::size_t i = 0; i < plain.trace.states[t].size(); ++i) {
        CHECK(diff.plain.states[t][i] == plain.trace.states[t][i]);
        CHECK(diff.trace[t][i].value() == plain.trace.states[t][i]);
      }
  }
}

TEST_CASE("rollout gradient through smooth robustness matches finite differences") {
  auto g = scenario::make_game("vehicles");
  const int H = 3, T = 6;
  auto pi0 = policy::init_policy(g.state_dim(), H, g.action_dim(), g.action_bounds(), 11);
  auto pi1 = policy::init_policy(g.state_dim(), H, g.action_dim(), g.action_bounds(), 12);
  auto phi = stl::simplify(stl::parse_formula("F[0,5](in_final_goal) & G[0,5](safe_distance)",
                                              g.predicates));
  auto s0 = g.joint_initial(1);

  // No gradient flows through the opponent's reaction, so the FD check must
  // replay the opponent's recorded action schedule (see diff_check.hpp).
  auto opp_actions = diff_check::record_opponent_actions(g, pi0, pi1, 0, s0, T);
  auto loss = [&](ad::Tape& tape, std::span<const ad::Value> w) {
    auto trace = diff_check::scripted_rollout(g, tape, pi0, w, opp_actions, 0, s0, T);
    return stl::smooth_robustness(*phi, tape, trace, g.predicates, 0, 0.1);
  };
  // eps 1e-3: coordinates with ~1e-11 gradients hit the metric's 1e-8
  // denominator floor, so FD roundoff (~ |f| * 1e-16 / eps) must stay below
  // 1e-4 * 1e-8 = 1e-12.
  CHECK(ad::grad_check(loss, pi0.weights, 1e-3) <= 1e-4);

  // the scripted rollout reproduces rollout_diff exactly at the nominal point
  ad::Tape tape;
  std::vector<ad::Value> wv;
  for (double v : pi0.weights) wv.push_back(tape.var(v));
  auto scripted = diff_check::scripted_rollout(g, tape, pi0, wv, opp_actions, 0, s0, T);
  ad::Tape tape2;
  std::vector<ad::Value> wv2;
  for (double v : pi0.weights) wv2.push_back(tape2.var(v));
  auto diff = sim::rollout_diff(g, tape2, pi0, wv2, pi1, 0, s0, T);
  for (std::size_t t = 0; t < scripted.size(); ++t)
    for (std::size_t i = 0; i < scripted[t].size(); ++i)
      CHECK(scripted[t][i].value() == diff.trace[t][i].value());
}
