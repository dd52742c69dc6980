#pragma once

// Benchmark definitions: region geometry, predicate libraries, task
// formulas, initial-condition sets, and the terminal reward.

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stlgame/dynamics.hpp"
#include "stlgame/formula.hpp"
#include "stlgame/parser.hpp"
#include "stlgame/policy.hpp"
#include "stlgame/semantics.hpp"

namespace stlgame::scenario {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// sqrt with a zero-gradient guard at the origin (subgradient convention).
inline double safe_sqrt(double v) { return std::sqrt(v < 1e-18 ? 1e-18 : v); }
inline ad::Value safe_sqrt(ad::Value v) {
  if (v.value() < 1e-18) return v.tape()->constant(std::sqrt(1e-18));
  return v.tape()->pow(v, 0.5);
}

// min/max by forward value; picks one branch, so gradients follow the
// active argument.
template <typename S>
S vmin(S a, S b) {
  return ad::scalar_value(a) <= ad::scalar_value(b) ? a : b;
}
template <typename S>
S vmax(S a, S b) {
  return ad::scalar_value(a) >= ad::scalar_value(b) ? a : b;
}

struct Region {
  enum class Kind { Disc, Box, Column, HalfSpace };
  Kind kind = Kind::Disc;
  // Disc / Column: center (x, y) and radius.
  // Box: per-axis [lo, hi] over the position dimensions.
  // HalfSpace: membership iff sign * (q[axis] - offset) >= 0.
  std::vector<double> center;
  double radius = 0.0;
  std::vector<double> lo, hi;
  int axis = 0;
  double offset = 0.0;
  double sign = 1.0;

  void validate() const {
    if ((kind == Kind::Disc || kind == Kind::Column) && radius <= 0.0)
      throw ScenarioError("region: radius must be positive");
    if (kind == Kind::Box) {
      if (lo.size() != hi.size() || lo.empty())
        throw ScenarioError("region: box bounds mismatch");
      for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i])) throw ScenarioError("region: box needs lo < hi per axis");
    }
  }

  // Signed membership margin at position q: positive inside, with
  // magnitude equal to the Euclidean distance to the boundary for discs,
  // columns, boxes, and half-spaces.
  template <typename S>
  S membership(std::span<const S> q) const {
    switch (kind) {
      case Kind::Disc:
      case Kind::Column: {
        S dx = q[0] - center[0];
        S dy = q[1] - center[1];
        return radius - safe_sqrt(dx * dx + dy * dy);
      }
      case Kind::Box: {
        bool inside = true;
        for (std::size_t i = 0; i < lo.size(); ++i) {
          double v = ad::scalar_value(q[i]);
          if (v < lo[i] || v > hi[i]) inside = false;
        }
        if (inside) {
          S m = vmin<S>(q[0] - lo[0], hi[0] - q[0]);
          for (std::size_t i = 1; i < lo.size(); ++i)
            m = vmin<S>(m, vmin<S>(q[i] - lo[i], hi[i] - q[i]));
          return m;
        }
        // outside: minus the Euclidean distance to the box
        S d2 = (q[0] - q[0]);  // zero of the right scalar type
        for (std::size_t i = 0; i < lo.size(); ++i) {
          double v = ad::scalar_value(q[i]);
          if (v < lo[i]) {
            S e = lo[i] - q[i];
            d2 = d2 + e * e;
          } else if (v > hi[i]) {
            S e = q[i] - hi[i];
            d2 = d2 + e * e;
          }
        }
        return -safe_sqrt(d2);
      }
      case Kind::HalfSpace:
        return sign * (q[axis] - offset);
    }
    throw ScenarioError("unreachable");
  }
};

using RegionTable = std::map<std::string, Region>;

struct OptimConfig {
  int epochs = 200;           // gradient steps per best response
  int opp_samples = 15;       // episodes per epoch
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double tau = 0.1;           // smooth-semantics temperature
  double tau_anneal = 1.0;    // geometric per-epoch factor (1 = constant)
  double tau_min = 1e-3;
  int hidden = 32;
  int eval_episodes = 150;
  int exploit_epochs = 200;   // BR budget inside exploitability
  int workers = 1;
};

struct GameConfig {
  std::string scenario;  // "vehicles" or "drones"
  std::string formula_text;
  stl::FormulaPtr formula;
  stl::PredicateTable predicates;
  RegionTable regions;
  int T = 50;
  double dt = 0.1;
  double d_min = 0.3;
  dyn::VehicleParams vehicle;
  dyn::DroneParams drone;
  policy::SliceMap slices;
  // Full per-agent initial sub-states, paired positionally.
  std::vector<std::pair<std::vector<double>, std::vector<double>>> initial_conditions;
  OptimConfig optim;

  int state_dim() const { return slices.joint_dim(); }
  int agent_dim() const { return slices.ego_dim; }
  int action_dim() const {
    return scenario == "drones" ? dyn::kDroneActionDim : dyn::kVehicleActionDim;
  }
  std::vector<double> action_bounds() const {
    if (scenario == "drones")
      return {drone.roll_max, drone.pitch_max, drone.thrust_max};
    return {vehicle.steer_rate_max, vehicle.accel_max};
  }

  std::vector<double> joint_initial(std::size_t index) const {
    if (index >= initial_conditions.size())
      throw ScenarioError("initial-condition index out of range");
    std::vector<double> s = initial_conditions[index].first;
    const auto& opp = initial_conditions[index].second;
    s.insert(s.end(), opp.begin(), opp.end());
    return s;
  }

  void validate() const {
    if (!formula) throw ScenarioError("config: no formula");
    if (stl::horizon(*formula) > T)
      throw ScenarioError("config: formula horizon exceeds T");
    if (initial_conditions.empty()) throw ScenarioError("config: no initial conditions");
    std::vector<std::string> used;
    stl::collect_predicates(*formula, used);
    for (const auto& name : used)
      if (!predicates.count(name))
        throw ScenarioError("config: formula references unknown predicate " + name);
  }
};

namespace detail {

// Squared separation between the two agents' positions minus d_min^2,
// exactly as the task formulas state it (quadratic units).
template <typename S>
S separation_margin(std::span<const S> state, int ego_pos, int opp_pos, int dims,
                    double d_min) {
  S d2 = (state[ego_pos] - state[opp_pos]) * (state[ego_pos] - state[opp_pos]);
  for (int i = 1; i < dims; ++i) {
    S e = state[ego_pos + i] - state[opp_pos + i];
    d2 = d2 + e * e;
  }
  return d2 - d_min * d_min;
}

}  // namespace detail

inline RegionTable default_vehicle_regions() {
  RegionTable t;
  t["intermediate_goal"] = Region{Region::Kind::Disc, {0.0, 0.8}, 0.25};
  t["final_goal"] = Region{Region::Kind::Disc, {0.9, 0.9}, 0.25};
  t["red_circle"] = Region{Region::Kind::Disc, {0.3, 0.3}, 0.3};
  return t;
}

inline RegionTable default_drone_regions() {
  RegionTable t;
  Region goal;
  goal.kind = Region::Kind::Box;
  goal.lo = {0.7, 0.7, 0.5};
  goal.hi = {1.2, 1.2, 1.5};
  t["goal"] = goal;
  t["unsafe"] = Region{Region::Kind::Column, {0.0, 0.0}, 0.3};
  Region z1;
  z1.kind = Region::Kind::HalfSpace;
  z1.axis = 1;
  z1.offset = 0.2;
  z1.sign = 1.0;
  t["zone1"] = z1;
  Region z2 = z1;
  z2.sign = -1.0;
  t["zone2"] = z2;
  return t;
}

inline const Region& require_region(const RegionTable& regions, const std::string& name) {
  auto it = regions.find(name);
  if (it == regions.end()) throw ScenarioError("missing region: " + name);
  return it->second;
}

// Vehicle joint state: [ego s_x, s_y, delta, v, psi | opp ...], positions
// at offsets 0,1 and 5,6.
inline stl::PredicateTable vehicle_predicates(const RegionTable& regions, double d_min) {
  stl::PredicateTable preds;
  auto region_pred = [&](const std::string& pred_name, const std::string& region_name,
                         int pos_off) {
    Region r = require_region(regions, region_name);
    preds[pred_name] = stl::make_predicate(
        pred_name, [r, pos_off](auto s) { return r.membership(s.subspan(pos_off, 2)); });
  };
  region_pred("in_intermediate_goal", "intermediate_goal", 0);
  region_pred("in_final_goal", "final_goal", 0);
  region_pred("in_red_circle", "red_circle", 0);
  preds["safe_distance"] = stl::make_predicate("safe_distance", [d_min](auto s) {
    return detail::separation_margin(s, 0, 5, 2, d_min);
  });
  return preds;
}

// Drone joint state: [ego vx, vy, vz, x, y, z | opp ...], positions at
// offsets 3..5 and 9..11.
inline stl::PredicateTable drone_predicates(const RegionTable& regions, double d_min) {
  stl::PredicateTable preds;
  Region goal = require_region(regions, "goal");
  Region unsafe = require_region(regions, "unsafe");
  Region zone1 = require_region(regions, "zone1");
  Region zone2 = require_region(regions, "zone2");
  preds["in_goal"] = stl::make_predicate(
      "in_goal", [goal](auto s) { return goal.membership(s.subspan(3, 3)); });
  preds["in_unsafe"] = stl::make_predicate(
      "in_unsafe", [unsafe](auto s) { return unsafe.membership(s.subspan(3, 2)); });
  preds["in_zone1"] = stl::make_predicate(
      "in_zone1", [zone1](auto s) { return zone1.membership(s.subspan(3, 3)); });
  preds["in_zone2"] = stl::make_predicate(
      "in_zone2", [zone2](auto s) { return zone2.membership(s.subspan(3, 3)); });
  preds["safe_distance"] = stl::make_predicate("safe_distance", [d_min](auto s) {
    return detail::separation_margin(s, 3, 9, 3, d_min);
  });
  // Altitude rules per zone, encoded as interval bounds on z.
  preds["alt1_lo"] = stl::make_predicate("alt1_lo", [](auto s) { return s[5] - 1.0; });
  preds["alt1_hi"] = stl::make_predicate("alt1_hi", [](auto s) { return 5.0 - s[5]; });
  preds["alt2_lo"] = stl::make_predicate("alt2_lo", [](auto s) { return s[5] - 0.0; });
  preds["alt2_hi"] = stl::make_predicate("alt2_hi", [](auto s) { return 3.0 - s[5]; });
  return preds;
}

inline std::string vehicle_spec_text(int T) {
  std::string b = std::to_string(T - 1);
  return "F[0," + b + "](in_intermediate_goal) & F[0," + b + "](in_final_goal)" +
         " & G[0," + b + "](!(in_red_circle)) & G[0," + b + "](safe_distance)";
}

inline std::string drone_spec_text(int T) {
  std::string b = std::to_string(T - 1);
  return "F[0," + b + "](in_goal)" +
         " & G[0," + b + "](!(in_unsafe) & safe_distance)" +
         " & G[0," + b + "](in_zone1 -> (alt1_lo & alt1_hi))" +
         " & G[0," + b + "](in_zone2 -> (alt2_lo & alt2_hi))";
}

// Benchmark initial-condition lists; all non-position state entries are 0,
// and pairs are matched positionally.
inline std::vector<std::pair<std::vector<double>, std::vector<double>>>
initial_conditions(const std::string& scenario) {
  auto vehicle_state = [](double x, double y) {
    return std::vector<double>{x, y, 0.0, 0.0, 0.0};
  };
  auto drone_state = [](double x, double y, double z) {
    return std::vector<double>{0.0, 0.0, 0.0, x, y, z};
  };
  if (scenario == "vehicles") {
    return {
        {vehicle_state(-1.0, -1.0), vehicle_state(-0.5, -0.5)},
        {vehicle_state(-0.5, -1.0), vehicle_state(0.0, 0.0)},
        {vehicle_state(-1.0, -0.5), vehicle_state(-0.25, -0.25)},
        {vehicle_state(-0.75, -0.75), vehicle_state(-0.5, -1.0)},
        {vehicle_state(-0.5, -0.75), vehicle_state(-0.5, -0.9)},
    };
  }
  if (scenario == "drones") {
    return {
        {drone_state(-1.0, -1.0, 1.4), drone_state(0.0, 0.5, 1.3)},
        {drone_state(-0.5, -1.0, 1.1), drone_state(0.0, 0.0, 1.1)},
        {drone_state(-1.0, -0.5, 1.5), drone_state(-0.25, -0.25, 0.8)},
        {drone_state(0.5, -0.75, 1.2), drone_state(-0.5, -1.0, 0.8)},
        {drone_state(0.0, -0.75, 1.2), drone_state(-0.5, -0.9, 1.4)},
    };
  }
  throw ScenarioError("unknown scenario: " + scenario);
}

inline GameConfig make_game(const std::string& scenario) {
  GameConfig g;
  g.scenario = scenario;
  g.T = 50;
  if (scenario == "vehicles") {
    g.dt = 0.1;
    g.regions = default_vehicle_regions();
    g.predicates = vehicle_predicates(g.regions, g.d_min);
    g.formula_text = vehicle_spec_text(g.T);
    g.slices = {0, dyn::kVehicleStateDim, dyn::kVehicleStateDim, dyn::kVehicleStateDim};
  } else if (scenario == "drones") {
    g.dt = dyn::kDroneDt;
    g.regions = default_drone_regions();
    g.predicates = drone_predicates(g.regions, g.d_min);
    g.formula_text = drone_spec_text(g.T);
    g.slices = {0, dyn::kDroneStateDim, dyn::kDroneStateDim, dyn::kDroneStateDim};
  } else {
    throw ScenarioError("unknown scenario: " + scenario);
  }
  g.formula = stl::parse_formula(g.formula_text, g.predicates);
  g.initial_conditions = initial_conditions(scenario);
  g.validate();
  return g;
}

// Rebuild derived fields (predicates, formula) after region/d_min/T edits.
inline void rebuild_game(GameConfig& g) {
  if (g.scenario == "vehicles") {
    g.predicates = vehicle_predicates(g.regions, g.d_min);
    if (g.formula_text.empty()) g.formula_text = vehicle_spec_text(g.T);
  } else {
    g.predicates = drone_predicates(g.regions, g.d_min);
    if (g.formula_text.empty()) g.formula_text = drone_spec_text(g.T);
  }
  g.formula = stl::parse_formula(g.formula_text, g.predicates);
  g.validate();
}

// Terminal-only reward: 0 before the final step, the trace robustness at
// t = T for the ego, negated for the opponent.
inline double terminal_reward(const stl::Trace& trace, const stl::Formula& phi,
                              const stl::PredicateTable& preds, int t, int T,
                              int agent = 0) {
  if (t < T) return 0.0;
  double rho = stl::robustness(phi, trace, preds, 0);
  return agent == 0 ? rho : -rho;
}

}  // namespace stlgame::scenario
