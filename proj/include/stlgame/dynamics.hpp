#pragma once

// Deterministic discrete-time transition functions for both benchmarks.
// Everything is templated on the scalar type, so the identical arithmetic
// runs in plain doubles or on the autodiff tape.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stlgame/autodiff.hpp"

namespace stlgame::dyn {

class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Kinematic single-track vehicle: state [s_x, s_y, delta, v, psi],
// input [v_delta, a_long]. Explicit Euler; input saturation followed by
// state saturation realizes the physical steering/acceleration limits.
struct VehicleParams {
  double wheelbase = 0.32;
  double steer_min = -0.9, steer_max = 0.9;       // rad
  double v_min = -1.0, v_max = 3.0;               // m/s
  double steer_rate_max = 0.4;                    // rad/s
  double accel_max = 1.5;                         // m/s^2
};

inline constexpr int kVehicleStateDim = 5;
inline constexpr int kVehicleActionDim = 2;

template <typename S>
std::array<S, 5> vehicle_step(const std::array<S, 5>& x, const std::array<S, 2>& u,
                              const VehicleParams& p, double dt) {
  using ad::clamp;
  using std::cos;
  using std::sin;
  using std::tan;
  using ad::cos;
  using ad::sin;
  using ad::tan;
  if (dt <= 0.0) throw DynamicsError("vehicle_step: dt must be positive");

  S steer_rate = clamp(u[0], -p.steer_rate_max, p.steer_rate_max);
  S accel = clamp(u[1], -p.accel_max, p.accel_max);

  std::array<S, 5> next{
      x[0] + dt * (x[3] * cos(x[4])),
      x[1] + dt * (x[3] * sin(x[4])),
      clamp(x[2] + dt * steer_rate, p.steer_min, p.steer_max),
      clamp(x[3] + dt * accel, p.v_min, p.v_max),
      x[4] + dt * ((x[3] / p.wheelbase) * tan(x[2])),
  };
  return next;
}

// Discretized quad-rotor: state [vx, vy, vz, x, y, z], input
// [theta (roll), phi (pitch), tau (thrust)]. Linear update x' = A x + B u
// with an implied 0.2 s step.
struct DroneParams {
  double roll_max = 0.3;    // |theta| bound, rad
  double pitch_max = 0.3;   // |phi| bound, rad
  double thrust_min = -1.0, thrust_max = 1.0;
};

inline constexpr int kDroneStateDim = 6;
inline constexpr int kDroneActionDim = 3;
inline constexpr double kDroneDt = 0.2;

inline constexpr std::array<std::array<double, 6>, 6> kDroneA{{
    {1, 0, 0, 0, 0, 0},
    {0, 1, 0, 0, 0, 0},
    {0, 0, 1, 0, 0, 0},
    {0.2, 0, 0, 1, 0, 0},
    {0, 0.2, 0, 0, 1, 0},
    {0, 0, 0.2, 0, 0, 1},
}};

inline constexpr std::array<std::array<double, 3>, 6> kDroneB{{
    {1.96, 0, 0},
    {0, -1.96, 0},
    {0, 0, 0.4},
    {0.196, 0, 0},
    {0, -0.196, 0},
    {0, 0, 0.04},
}};

template <typename S>
std::array<S, 6> drone_step(const std::array<S, 6>& x, const std::array<S, 3>& u_raw,
                            const DroneParams& p) {
  using ad::clamp;
  std::array<S, 3> u{
      clamp(u_raw[0], -p.roll_max, p.roll_max),
      clamp(u_raw[1], -p.pitch_max, p.pitch_max),
      clamp(u_raw[2], p.thrust_min, p.thrust_max),
  };
  std::array<S, 6> next{};
  for (int i = 0; i < 6; ++i) {
    S acc = kDroneA[i][0] * x[0];
    for (int j = 1; j < 6; ++j)
      if (kDroneA[i][j] != 0.0) acc = acc + kDroneA[i][j] * x[j];
    for (int j = 0; j < 3; ++j)
      if (kDroneB[i][j] != 0.0) acc = acc + kDroneB[i][j] * u[j];
    next[i] = acc;
  }
  return next;
}

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DynamicsError(std::string("non-finite ") + what);
}

}  // namespace stlgame::dyn
