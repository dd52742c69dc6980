#pragma once

// Helpers for finite-difference validation of rollout gradients.
//
// Differentiable rollouts treat the opponent's actions as constants: no
// gradient flows through the opponent's reaction to the ego's states. A
// finite-difference check must therefore differentiate the same function,
// i.e. replay the opponent's action schedule recorded at the nominal
// parameters instead of re-running the opponent policy at the perturbed
// ones.

#include <span>
#include <vector>

#include "stlgame/rollout.hpp"
#include "stlgame/semantics.hpp"

namespace diff_check {

using namespace stlgame;

// Opponent action schedule at the nominal ego parameters.
inline std::vector<std::vector<double>> record_opponent_actions(
    const scenario::GameConfig& g, const policy::PolicyParams& ego,
    const policy::PolicyParams& opp, int ego_agent, const std::vector<double>& s0,
    int T) {
  sim::RolloutResult r = ego_agent == 0 ? sim::rollout_plain(g, ego, opp, s0, T)
                                        : sim::rollout_plain(g, opp, ego, s0, T);
  return r.actions[1 - ego_agent];
}

// Taped rollout with the opponent replaying a fixed action schedule;
// matches rollout_diff bit-for-bit at the nominal parameters.
inline stl::TapeTrace scripted_rollout(const scenario::GameConfig& g, ad::Tape& tape,
                                       const policy::PolicyParams& ego,
                                       std::span<const ad::Value> w,
                                       const std::vector<std::vector<double>>& opp_actions,
                                       int ego_agent, const std::vector<double>& s0,
                                       int T) {
  stl::TapeTrace trace;
  std::vector<ad::Value> state;
  for (double v : s0) state.push_back(tape.constant(v));
  trace.push_back(state);

  auto st = policy::make_state(ego, tape);
  std::vector<ad::Value> a_ego;
  for (int t = 0; t < T; ++t) {
    auto obs = policy::observe<ad::Value>(state, g.slices, ego_agent);
    policy::policy_step<ad::Value>(ego, w, st, obs, a_ego);
    std::vector<ad::Value> a_opp;
    for (double v : opp_actions[t]) a_opp.push_back(tape.constant(v));
    state = ego_agent == 0 ? sim::detail::joint_step<ad::Value>(g, state, a_ego, a_opp)
                           : sim::detail::joint_step<ad::Value>(g, state, a_opp, a_ego);
    trace.push_back(state);
  }
  return trace;
}

}  // namespace diff_check
