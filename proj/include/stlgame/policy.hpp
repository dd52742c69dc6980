#pragma once

// Recurrent (LSTM) policy networks over observation histories, and
// finitely-supported mixture policies realizing the fictitious-play average.

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stlgame/autodiff.hpp"
#include "stlgame/util.hpp"

namespace stlgame::policy {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat weight layout:
//   for each gate in {input, forget, cell, output}:
//     W_gate : hidden x (obs + hidden), row-major
//     b_gate : hidden
//   head W : act x hidden, row-major
//   head b : act
struct PolicyParams {
  int obs_dim = 0;
  int hidden = 0;
  int act_dim = 0;
  std::vector<double> action_bound;  // per output dimension, tanh-squashed
  std::vector<double> weights;

  static std::size_t param_count(int obs_dim, int hidden, int act_dim) {
    return 4u * hidden * (obs_dim + hidden) + 4u * hidden +
           static_cast<std::size_t>(act_dim) * hidden + act_dim;
  }
};

inline PolicyParams init_policy(int obs_dim, int hidden, int act_dim,
                                std::vector<double> action_bound, std::uint64_t seed) {
  if (obs_dim <= 0 || hidden <= 0 || act_dim <= 0)
    throw PolicyError("init_policy: layer sizes must be positive");
  if (action_bound.size() != static_cast<std::size_t>(act_dim))
    throw PolicyError("init_policy: action bound dimension mismatch");
  PolicyParams p;
  p.obs_dim = obs_dim;
  p.hidden = hidden;
  p.act_dim = act_dim;
  p.action_bound = std::move(action_bound);
  p.weights.resize(PolicyParams::param_count(obs_dim, hidden, act_dim));

  Rng rng(seed);
  const int in = obs_dim + hidden;
  const double gate_scale = 1.0 / std::sqrt(static_cast<double>(in));
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::size_t at = 0;
  for (int gate = 0; gate < 4; ++gate) {
    for (int i = 0; i < hidden * in; ++i)
      p.weights[at++] = rng.uniform(-gate_scale, gate_scale);
    for (int i = 0; i < hidden; ++i)
      p.weights[at++] = (gate == 1) ? 1.0 : 0.0;  // forget-gate bias 1
  }
  for (int i = 0; i < act_dim * hidden; ++i)
    p.weights[at++] = rng.uniform(-head_scale, head_scale);
  for (int i = 0; i < act_dim; ++i) p.weights[at++] = 0.0;
  return p;
}

// Per-rollout recurrent state.
template <typename S>
struct LstmState {
  std::vector<S> h, c;
};

inline LstmState<double> make_state(const PolicyParams& p) {
  return {std::vector<double>(p.hidden, 0.0), std::vector<double>(p.hidden, 0.0)};
}

inline LstmState<ad::Value> make_state(const PolicyParams& p, ad::Tape& tape) {
  LstmState<ad::Value> s;
  s.h.assign(p.hidden, tape.constant(0.0));
  s.c.assign(p.hidden, tape.constant(0.0));
  return s;
}

inline double dot(std::span<const double> xs, std::span<const double> ys) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += xs[i] * ys[i];
  return s;
}

inline ad::Value dot(std::span<const ad::Value> xs, std::span<const ad::Value> ys) {
  return xs[0].tape()->dot(xs, ys);
}

// One recurrent-cell update followed by a tanh-squashed, bound-scaled
// linear head. `w` is the flat weight vector in the layout above; in
// differentiable mode it is the tape-var image of params.weights.
template <typename S>
void policy_step(const PolicyParams& p, std::span<const S> w, LstmState<S>& state,
                 std::span<const S> obs, std::vector<S>& action_out) {
  using ad::sigmoid;
  using ad::tanh;
  using std::tanh;
  if (obs.size() != static_cast<std::size_t>(p.obs_dim))
    throw PolicyError("policy_step: observation dimension mismatch");

  const int H = p.hidden;
  const int in = p.obs_dim + H;
  std::vector<S> xh;
  xh.reserve(in);
  xh.insert(xh.end(), obs.begin(), obs.end());
  xh.insert(xh.end(), state.h.begin(), state.h.end());

  auto gate_pre = [&](int gate, int row) -> S {
    std::size_t off = static_cast<std::size_t>(gate) * (H * in + H);
    std::span<const S> wrow = w.subspan(off + static_cast<std::size_t>(row) * in, in);
    S bias = w[off + static_cast<std::size_t>(H) * in + row];
    return dot(wrow, std::span<const S>(xh)) + bias;
  };

  std::vector<S> h_next, c_next;
  h_next.reserve(H);
  c_next.reserve(H);
  for (int r = 0; r < H; ++r) {
    S i_g = sigmoid(gate_pre(0, r));
    S f_g = sigmoid(gate_pre(1, r));
    S g_g = tanh(gate_pre(2, r));
    S o_g = sigmoid(gate_pre(3, r));
    S c = f_g * state.c[r] + i_g * g_g;
    h_next.push_back(o_g * tanh(c));
    c_next.push_back(c);
  }
  state.h = std::move(h_next);
  state.c = std::move(c_next);

  const std::size_t head = 4u * (static_cast<std::size_t>(H) * in + H);
  action_out.clear();
  action_out.reserve(p.act_dim);
  for (int a = 0; a < p.act_dim; ++a) {
    std::span<const S> wrow = w.subspan(head + static_cast<std::size_t>(a) * H, H);
    S pre = dot(wrow, std::span<const S>(state.h)) + w[head + static_cast<std::size_t>(p.act_dim) * H + a];
    action_out.push_back(p.action_bound[a] * tanh(pre));
  }
}

// Convenience: plain-mode weights are just the stored doubles.
inline std::span<const double> plain_weights(const PolicyParams& p) {
  return p.weights;
}

// Finitely-supported distribution over stored networks; one component is
// drawn per episode and acts for the whole rollout.
struct MixturePolicy {
  std::vector<std::shared_ptr<const PolicyParams>> components;
  std::vector<double> weights;

  void validate() const {
    if (components.empty()) throw PolicyError("mixture: empty component list");
    if (components.size() != weights.size())
      throw PolicyError("mixture: component/weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw PolicyError("mixture: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw PolicyError("mixture: weights must sum to 1");
  }
};

inline MixturePolicy single_policy_mixture(PolicyParams p) {
  MixturePolicy m;
  m.components.push_back(std::make_shared<PolicyParams>(std::move(p)));
  m.weights.push_back(1.0);
  return m;
}

inline std::size_t mixture_sample(const MixturePolicy& mix, Rng& rng) {
  mix.validate();
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < mix.weights.size(); ++i) {
    acc += mix.weights[i];
    if (u < acc) return i;
  }
  return mix.weights.size() - 1;
}

// Default observation: full joint state with the observer's own slice first.
struct SliceMap {
  int ego_offset = 0;
  int ego_dim = 0;
  int opp_offset = 0;
  int opp_dim = 0;

  int joint_dim() const { return ego_dim + opp_dim; }
};

template <typename S>
std::vector<S> observe(std::span<const S> joint, const SliceMap& slices, int agent) {
  std::vector<S> obs;
  obs.reserve(joint.size());
  int own_off = agent == 0 ? slices.ego_offset : slices.opp_offset;
  int own_dim = agent == 0 ? slices.ego_dim : slices.opp_dim;
  int other_off = agent == 0 ? slices.opp_offset : slices.ego_offset;
  int other_dim = agent == 0 ? slices.opp_dim : slices.ego_dim;
  for (int i = 0; i < own_dim; ++i) obs.push_back(joint[own_off + i]);
  for (int i = 0; i < other_dim; ++i) obs.push_back(joint[other_off + i]);
  return obs;
}

}  // namespace stlgame::policy
