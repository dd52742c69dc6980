#pragma once

// Simultaneous-move rollouts of one game episode, in plain arithmetic or
// with one agent's computations recorded on an autodiff tape.

#include <span>
#include <vector>

#include "stlgame/autodiff.hpp"
#include "stlgame/dynamics.hpp"
#include "stlgame/formula.hpp"
#include "stlgame/policy.hpp"
#include "stlgame/scenarios.hpp"

namespace stlgame::sim {

struct RolloutResult {
  stl::Trace trace;
  // actions[agent][t], t in [0, T)
  std::array<std::vector<std::vector<double>>, 2> actions;
};

namespace detail {

template <typename S>
std::vector<S> joint_step(const scenario::GameConfig& g, std::span<const S> state,
                          std::span<const S> a0, std::span<const S> a1) {
  std::vector<S> next;
  next.reserve(state.size());
  if (g.scenario == "drones") {
    std::array<S, 6> x0, x1;
    for (int i = 0; i < 6; ++i) {
      x0[i] = state[i];
      x1[i] = state[6 + i];
    }
    auto n0 = dyn::drone_step(x0, {a0[0], a0[1], a0[2]}, g.drone);
    auto n1 = dyn::drone_step(x1, {a1[0], a1[1], a1[2]}, g.drone);
    next.insert(next.end(), n0.begin(), n0.end());
    next.insert(next.end(), n1.begin(), n1.end());
  } else {
    std::array<S, 5> x0, x1;
    for (int i = 0; i < 5; ++i) {
      x0[i] = state[i];
      x1[i] = state[5 + i];
    }
    auto n0 = dyn::vehicle_step(x0, {a0[0], a0[1]}, g.vehicle, g.dt);
    auto n1 = dyn::vehicle_step(x1, {a1[0], a1[1]}, g.vehicle, g.dt);
    next.insert(next.end(), n0.begin(), n0.end());
    next.insert(next.end(), n1.begin(), n1.end());
  }
  return next;
}

}  // namespace detail

// Both policies observe the shared state, emit actions simultaneously,
// and the joint state steps once per timestep.
inline RolloutResult rollout_plain(const scenario::GameConfig& g,
                                   const policy::PolicyParams& pi0,
                                   const policy::PolicyParams& pi1,
                                   std::vector<double> s0, int T) {
  dyn::check_finite(s0, "initial state");
  RolloutResult out;
  out.trace.dt = g.dt;
  out.trace.states.push_back(s0);

  auto st0 = policy::make_state(pi0);
  auto st1 = policy::make_state(pi1);
  std::vector<double> state = std::move(s0);
  std::vector<double> a0, a1;
  for (int t = 0; t < T; ++t) {
    auto o0 = policy::observe<double>(state, g.slices, 0);
    auto o1 = policy::observe<double>(state, g.slices, 1);
    policy::policy_step<double>(pi0, pi0.weights, st0, o0, a0);
    policy::policy_step<double>(pi1, pi1.weights, st1, o1, a1);
    out.actions[0].push_back(a0);
    out.actions[1].push_back(a1);
    state = detail::joint_step<double>(g, state, a0, a1);
    dyn::check_finite(state, "state");
    out.trace.states.push_back(state);
  }
  return out;
}

struct DiffRollout {
  stl::TapeTrace trace;
  // Plain-value image of the trace, for hard-robustness evaluation.
  stl::Trace plain;
};

// Rollout with agent `diff_agent`'s weights already on the tape (as vars);
// the other agent runs in plain arithmetic and its actions enter the tape
// as constants, so no gradient flows into it.
inline DiffRollout rollout_diff(const scenario::GameConfig& g, ad::Tape& tape,
                                const policy::PolicyParams& diff_params,
                                std::span<const ad::Value> diff_weights,
                                const policy::PolicyParams& other_params,
                                int diff_agent, std::vector<double> s0, int T) {
  dyn::check_finite(s0, "initial state");
  DiffRollout out;
  out.plain.dt = g.dt;

  std::vector<ad::Value> state;
  state.reserve(s0.size());
  for (double v : s0) state.push_back(tape.constant(v));
  out.trace.push_back(state);
  out.plain.states.push_back(s0);

  auto st_diff = policy::make_state(diff_params, tape);
  auto st_other = policy::make_state(other_params);
  std::vector<ad::Value> a_diff;
  std::vector<double> other_obs, a_other_plain;
  for (int t = 0; t < T; ++t) {
    auto o_diff = policy::observe<ad::Value>(state, g.slices, diff_agent);
    policy::policy_step<ad::Value>(diff_params, diff_weights, st_diff, o_diff, a_diff);

    other_obs.clear();
    {
      std::vector<double> plain_state;
      plain_state.reserve(state.size());
      for (ad::Value v : state) plain_state.push_back(v.value());
      other_obs = policy::observe<double>(plain_state, g.slices, 1 - diff_agent);
    }
    policy::policy_step<double>(other_params, other_params.weights, st_other,
                                other_obs, a_other_plain);
    std::vector<ad::Value> a_other;
    a_other.reserve(a_other_plain.size());
    for (double v : a_other_plain) a_other.push_back(tape.constant(v));

    state = diff_agent == 0
                ? detail::joint_step<ad::Value>(g, state, a_diff, a_other)
                : detail::joint_step<ad::Value>(g, state, a_other, a_diff);
    out.trace.push_back(state);
    std::vector<double> plain_state;
    plain_state.reserve(state.size());
    for (ad::Value v : state) plain_state.push_back(v.value());
    out.plain.states.push_back(std::move(plain_state));
  }
  return out;
}

}  // namespace stlgame::sim
