#pragma once

// Fictitious self-play: gradient-based best responses against mixture
// opponents, average-policy updates, expected-return estimation, and
// exploitability evaluation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "stlgame/io.hpp"
#include "stlgame/policy.hpp"
#include "stlgame/rollout.hpp"
#include "stlgame/scenarios.hpp"
#include "stlgame/semantics.hpp"
#include "stlgame/util.hpp"

namespace stlgame::fsp {

namespace fs = std::filesystem;

class FspError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Budget {
  int epochs = 200;
  int opp_samples = 15;
};

struct ReturnEstimate {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
  double sat_rate = 0.0;
  int failures = 0;
  std::vector<double> values;       // per-episode ego robustness
  std::vector<double> ego_returns;  // recorded per-episode returns, both sides
  std::vector<double> opp_returns;
};

// Runs fn(i) for i in [0, n) with a deterministic, index-ordered result
// layout regardless of the worker count.
inline void parallel_for(int n, int workers, const std::function<void(int, int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Adam {
  double lr, beta1, beta2, eps;
  std::vector<double> m, v;
  int t = 0;

  Adam(std::size_t n, const scenario::OptimConfig& c)
      : lr(c.learning_rate), beta1(c.adam_beta1), beta2(c.adam_beta2), eps(c.adam_eps),
        m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& w, const std::vector<double>& grad) {
    ++t;
    double c1 = 1.0 - std::pow(beta1, t);
    double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct BrDiagnostics {
  std::vector<double> epoch_returns;  // mean hard return (agent-signed) per epoch
  double best_return = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
};

// Gradient-based approximate best response for `agent` (0 maximizes the
// task robustness, 1 minimizes it) against a fixed opponent mixture.
// Returns the parameters with the best hard-robustness mean return across
// all epochs, not the last epoch.
inline policy::PolicyParams best_response(const scenario::GameConfig& game,
                                          const policy::MixturePolicy& opponent,
                                          int agent, const Budget& budget,
                                          std::uint64_t seed,
                                          BrDiagnostics* diag = nullptr) {
  if (budget.epochs <= 0 || budget.opp_samples <= 0)
    throw FspError("best_response: budget must be positive");
  opponent.validate();

  const int n_init = static_cast<int>(game.initial_conditions.size());
  policy::PolicyParams params =
      policy::init_policy(game.state_dim(), game.optim.hidden, game.action_dim(),
                          game.action_bounds(), derive_seed(seed, 0xA11CE));
  Rng draw_rng(derive_seed(seed, 0xD4A4));
  Adam adam(params.weights.size(), game.optim);

  const int workers = std::max(1, game.optim.workers);
  std::vector<ad::Tape> tapes(std::min(workers, budget.opp_samples));

  policy::PolicyParams best = params;
  double best_ret = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<double> grad(params.weights.size());
  std::vector<std::vector<double>> episode_grads(budget.opp_samples);
  std::vector<double> episode_hard(budget.opp_samples);
  double tau = game.optim.tau;

  for (int epoch = 0; epoch < budget.epochs; ++epoch) {
    // Draws happen on one stream, up front, so the schedule is identical
    // for any worker count.
    std::vector<std::pair<std::size_t, std::size_t>> draws(budget.opp_samples);
    for (auto& d : draws)
      d = {policy::mixture_sample(opponent, draw_rng), draw_rng.index(n_init)};

    parallel_for(budget.opp_samples, workers, [&](int i, int slot) {
      ad::Tape& tape = tapes[slot];
      tape.reset();
      std::vector<ad::Value> w;
      w.reserve(params.weights.size());
      for (double v : params.weights) w.push_back(tape.var(v));

      const policy::PolicyParams& opp = *opponent.components[draws[i].first];
      std::vector<double> s0 = game.joint_initial(draws[i].second);
      try {
        sim::DiffRollout ro =
            sim::rollout_diff(game, tape, params, w, opp, agent, std::move(s0), game.T);
        ad::Value rho = stl::smooth_robustness(*game.formula, tape, ro.trace,
                                               game.predicates, 0, tau);
        ad::Value ret = agent == 0 ? rho : -rho;
        episode_grads[i] = tape.backward(-ret);  // loss = -return
        double hard = stl::robustness(*game.formula, ro.plain, game.predicates, 0);
        episode_hard[i] = agent == 0 ? hard : -hard;
      } catch (const std::exception& e) {
        throw FspError("best_response: non-finite loss at epoch " +
                       std::to_string(epoch) + ", episode " + std::to_string(i) +
                       ": " + e.what());
      }
    });

    std::fill(grad.begin(), grad.end(), 0.0);
    double mean_hard = 0.0;
    for (int i = 0; i < budget.opp_samples; ++i) {
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += episode_grads[i][j];
      mean_hard += episode_hard[i];
    }
    for (double& gv : grad) gv /= budget.opp_samples;
    mean_hard /= budget.opp_samples;

    if (diag) diag->epoch_returns.push_back(mean_hard);
    if (mean_hard > best_ret) {
      best_ret = mean_hard;
      best = params;
      best_epoch = epoch;
    }

    adam.step(params.weights, grad);
    tau = std::max(game.optim.tau_min, tau * game.optim.tau_anneal);
  }

  if (diag) {
    diag->best_return = best_ret;
    diag->best_epoch = best_epoch;
  }
  return best;
}

// Average-policy update: appends the new best response with weight
// 1/(k+1), scaling old weights by k/(k+1). At k = 0 the initial random
// policy receives weight 0 and is dropped.
inline policy::MixturePolicy fp_update(const policy::MixturePolicy& mix,
                                       policy::PolicyParams br, int k) {
  policy::MixturePolicy next;
  if (k == 0) {
    next.components.push_back(std::make_shared<policy::PolicyParams>(std::move(br)));
    next.weights.push_back(1.0);
    return next;
  }
  if (mix.components.size() != static_cast<std::size_t>(k))
    throw FspError("fp_update: mixture must have k components at iteration k");
  next = mix;
  double scale = static_cast<double>(k) / (k + 1);
  for (double& w : next.weights) w *= scale;
  next.components.push_back(std::make_shared<policy::PolicyParams>(std::move(br)));
  next.weights.push_back(1.0 / (k + 1));
  next.validate();
  return next;
}

// Monte-Carlo expected return: plain rollouts with fresh mixture draws.
// `fixed_init` >= 0 pins the initial condition; otherwise each episode
// samples uniformly from the scenario set.
inline ReturnEstimate expected_return(const scenario::GameConfig& game,
                                      const policy::MixturePolicy& ego,
                                      const policy::MixturePolicy& opp, int episodes,
                                      std::uint64_t seed, int fixed_init = -1) {
  if (episodes < 1) throw FspError("expected_return: need at least one episode");
  ego.validate();
  opp.validate();
  Rng rng(derive_seed(seed, 0xE7A1));
  const int n_init = static_cast<int>(game.initial_conditions.size());

  ReturnEstimate est;
  double sum = 0.0, sum2 = 0.0;
  int satisfied = 0;
  for (int e = 0; e < episodes; ++e) {
    std::size_t ce = policy::mixture_sample(ego, rng);
    std::size_t co = policy::mixture_sample(opp, rng);
    std::size_t init = fixed_init >= 0 ? static_cast<std::size_t>(fixed_init)
                                       : rng.index(n_init);
    double rho;
    try {
      sim::RolloutResult ro = sim::rollout_plain(game, *ego.components[ce],
                                                 *opp.components[co],
                                                 game.joint_initial(init), game.T);
      rho = stl::robustness(*game.formula, ro.trace, game.predicates, 0);
    } catch (const std::exception&) {
      ++est.failures;
      est.values.push_back(-std::numeric_limits<double>::infinity());
      est.ego_returns.push_back(-std::numeric_limits<double>::infinity());
      est.opp_returns.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    est.values.push_back(rho);
    est.ego_returns.push_back(rho);
    est.opp_returns.push_back(-rho);
    sum += rho;
    sum2 += rho * rho;
    if (rho >= 0.0) ++satisfied;
  }
  est.count = episodes;
  int ok = episodes - est.failures;
  if (ok > 0) {
    est.mean = sum / ok;
    double var = std::max(0.0, sum2 / ok - est.mean * est.mean);
    est.stddev = std::sqrt(var);
    est.sat_rate = static_cast<double>(satisfied) / ok;
  }
  return est;
}

struct ExploitabilityResult {
  double raw = 0.0;      // sum of both sides' unclamped gains
  double clamped = 0.0;  // per-side gains clamped below at 0
  double gain_ego = 0.0;
  double gain_opp = 0.0;
  std::vector<double> per_init;  // unclamped, per initial condition
  double per_init_mean = 0.0;
  double per_init_std = 0.0;
};

// Trains an approximate BR against each side and measures the total
// gain both agents could achieve by deviating. Reported both raw and
// clamped (a trained BR can underperform the profile through estimation
// noise).
inline ExploitabilityResult exploitability(const scenario::GameConfig& game,
                                           const policy::MixturePolicy& ego,
                                           const policy::MixturePolicy& opp,
                                           const Budget& br_budget, int episodes,
                                           std::uint64_t seed) {
  if (episodes < 1) throw FspError("exploitability: need at least one episode");
  policy::MixturePolicy br_ego = policy::single_policy_mixture(
      best_response(game, opp, 0, br_budget, derive_seed(seed, 1)));
  policy::MixturePolicy br_opp = policy::single_policy_mixture(
      best_response(game, ego, 1, br_budget, derive_seed(seed, 2)));

  const int n_init = static_cast<int>(game.initial_conditions.size());
  ExploitabilityResult out;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n_init; ++i) {
    double u0_br = expected_return(game, br_ego, opp, episodes, derive_seed(seed, 10 + i), i).mean;
    double u0 = expected_return(game, ego, opp, episodes, derive_seed(seed, 20 + i), i).mean;
    double u1_br = -expected_return(game, ego, br_opp, episodes, derive_seed(seed, 30 + i), i).mean;
    double u1 = -expected_return(game, ego, opp, episodes, derive_seed(seed, 40 + i), i).mean;
    out.gain_ego += (u0_br - u0) / n_init;
    out.gain_opp += (u1_br - u1) / n_init;
    double eps_i = (u0_br - u0) + (u1_br - u1);
    out.per_init.push_back(eps_i);
    sum += eps_i;
    sum2 += eps_i * eps_i;
  }
  out.raw = out.gain_ego + out.gain_opp;
  out.clamped = std::max(0.0, out.gain_ego) + std::max(0.0, out.gain_opp);
  out.per_init_mean = sum / n_init;
  out.per_init_std = std::sqrt(std::max(0.0, sum2 / n_init - out.per_init_mean * out.per_init_mean));
  return out;
}

// --- FSP driver with checkpointing ------------------------------------------

struct IterationRecord {
  int iteration = 0;
  double br_return_ego = 0.0;
  double br_return_opp = 0.0;
  double wall_seconds = 0.0;  // kept out of the deterministic metrics stream
};

struct FspState {
  int iteration = 0;  // number of completed fp updates
  std::uint64_t master_seed = 0;
  policy::MixturePolicy ego;  // empty until iteration >= 1
  policy::MixturePolicy opp;
  std::vector<IterationRecord> log;
};

inline std::uint64_t br_seed(std::uint64_t master, int k, int agent) {
  return derive_seed(master, 0xB0 + static_cast<std::uint64_t>(k) * 2 + agent);
}

inline policy::PolicyParams initial_random_policy(const scenario::GameConfig& game,
                                                  std::uint64_t master, int agent) {
  return policy::init_policy(game.state_dim(), game.optim.hidden, game.action_dim(),
                             game.action_bounds(),
                             derive_seed(master, 0x1717 + agent));
}

inline void save_checkpoint(const FspState& st, const fs::path& dir) {
  fs::path iter_dir = dir / ("iter_" + std::to_string(st.iteration));
  fs::create_directories(iter_dir);
  io::save_mixture(st.ego, iter_dir / "ego_mixture.json", "ego_policy");
  io::save_mixture(st.opp, iter_dir / "opp_mixture.json", "opp_policy");
  io::json ledger{{"master_seed", st.master_seed}, {"iteration", st.iteration}};
  io::write_file_atomic(iter_dir / "ledger.json", ledger.dump(2) + "\n");
}

inline FspState load_checkpoint(const fs::path& iter_dir) {
  FspState st;
  io::json ledger = io::json::parse(io::read_file(iter_dir / "ledger.json"));
  st.master_seed = ledger.at("master_seed").get<std::uint64_t>();
  st.iteration = ledger.at("iteration").get<int>();
  st.ego = io::load_mixture(iter_dir / "ego_mixture.json");
  st.opp = io::load_mixture(iter_dir / "opp_mixture.json");
  return st;
}

// Simultaneous-update FP loop (Alg.-style): both best responses are
// trained against the iteration-k mixtures, then both mixtures update.
// With a checkpoint directory the state is persisted every iteration and
// resumable bit-identically (seeds are derived per (iteration, agent)).
inline FspState run_fsp(const scenario::GameConfig& game, int iterations,
                        const Budget& budget, std::uint64_t seed,
                        const fs::path& checkpoint_dir = {},
                        std::optional<FspState> resume = std::nullopt,
                        const std::function<void(const FspState&)>& on_iteration = {}) {
  if (iterations < 1) throw FspError("run_fsp: need at least one iteration");
  FspState st;
  if (resume) {
    st = *resume;
  } else {
    st.master_seed = seed;
    st.iteration = 0;
  }

  for (int k = st.iteration; k < iterations; ++k) {
    auto t0 = std::chrono::steady_clock::now();
    policy::MixturePolicy ego_k =
        k == 0 ? policy::single_policy_mixture(initial_random_policy(game, st.master_seed, 0))
               : st.ego;
    policy::MixturePolicy opp_k =
        k == 0 ? policy::single_policy_mixture(initial_random_policy(game, st.master_seed, 1))
               : st.opp;

    BrDiagnostics d_ego, d_opp;
    policy::PolicyParams beta_ego =
        best_response(game, opp_k, 0, budget, br_seed(st.master_seed, k, 0), &d_ego);
    policy::PolicyParams beta_opp =
        best_response(game, ego_k, 1, budget, br_seed(st.master_seed, k, 1), &d_opp);

    st.ego = fp_update(k == 0 ? policy::MixturePolicy{} : st.ego, std::move(beta_ego), k);
    st.opp = fp_update(k == 0 ? policy::MixturePolicy{} : st.opp, std::move(beta_opp), k);
    st.iteration = k + 1;

    IterationRecord rec;
    rec.iteration = st.iteration;
    rec.br_return_ego = d_ego.best_return;
    rec.br_return_opp = d_opp.best_return;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.log.push_back(rec);

    if (!checkpoint_dir.empty()) save_checkpoint(st, checkpoint_dir);
    if (on_iteration) on_iteration(st);
  }
  return st;
}

// --- held-out robustness experiment ------------------------------------------

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;
  double sat_rate = 0.0;
};

struct HeldoutResult {
  CellStats nash_vs_seen, br_vs_seen, nash_vs_unseen, br_vs_unseen;
  policy::PolicyParams br;  // the BR trained only against the seen average
};

inline policy::MixturePolicy uniform_mixture(
    const std::vector<std::shared_ptr<const policy::PolicyParams>>& set) {
  policy::MixturePolicy mix;
  mix.components = set;
  mix.weights.assign(set.size(), 1.0 / set.size());
  return mix;
}

// Trains a best response only against the uniform mixture of seen
// opponents, then evaluates both it and the Nash mixture against the seen
// mixture and the unseen set.
inline HeldoutResult heldout_experiment(
    const scenario::GameConfig& game, const policy::MixturePolicy& nash,
    std::vector<std::shared_ptr<const policy::PolicyParams>> seen,
    std::vector<std::shared_ptr<const policy::PolicyParams>> unseen,
    const Budget& br_budget, int episodes, std::uint64_t seed) {
  if (seen.empty() || unseen.empty())
    throw FspError("heldout_experiment: seen and unseen sets must be non-empty");
  for (const auto& s : seen)
    for (const auto& u : unseen)
      if (s == u || s->weights == u->weights)
        throw FspError("heldout_experiment: seen and unseen sets must be disjoint");

  policy::MixturePolicy seen_mix = uniform_mixture(seen);
  policy::MixturePolicy unseen_mix = uniform_mixture(unseen);
  policy::PolicyParams br_params =
      best_response(game, seen_mix, 0, br_budget, derive_seed(seed, 0xB2));
  policy::MixturePolicy br = policy::single_policy_mixture(br_params);

  auto cell = [&](const policy::MixturePolicy& ego, const policy::MixturePolicy& opp,
                  std::uint64_t salt) {
    ReturnEstimate est = expected_return(game, ego, opp, episodes, derive_seed(seed, salt));
    return CellStats{est.mean, est.stddev, est.sat_rate};
  };
  HeldoutResult out;
  out.nash_vs_seen = cell(nash, seen_mix, 1);
  out.br_vs_seen = cell(br, seen_mix, 2);
  out.nash_vs_unseen = cell(nash, unseen_mix, 3);
  out.br_vs_unseen = cell(br, unseen_mix, 4);
  out.br = std::move(br_params);
  return out;
}

}  // namespace stlgame::fsp
