#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace amod {

using StateVec = Eigen::Vector4d;    // (x, y, heading, speed)
using ControlVec = Eigen::Vector2d;  // (acceleration, steering angle)

struct DynamicsParams {
  double wheelbase = 2.5;  // m
  double v_max = 10.0;     // m/s
  double a_max = 3.0;      // m/s^2
  double steer_max = 0.5;  // rad
  double dt = 0.1;         // s
};

struct LinearizedStep {
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
};

// Discrete kinematic bicycle update. Speed is clamped to [0, v_max]; heading
// is left unwrapped so the map stays differentiable (callers normalize when
// committing to world state).
inline StateVec step(const StateVec& z, const ControlVec& u,
                     const DynamicsParams& p) {
  if (std::abs(u[1]) >= M_PI / 2.0)
    throw std::invalid_argument("dynamics: steering angle must satisfy |delta| < pi/2");
  const double theta = z[2], v = z[3];
  StateVec out;
  out[0] = z[0] + v * std::cos(theta) * p.dt;
  out[1] = z[1] + v * std::sin(theta) * p.dt;
  out[2] = theta + v / p.wheelbase * std::tan(u[1]) * p.dt;
  double v_next = v + u[0] * p.dt;
  out[3] = std::min(std::max(v_next, 0.0), p.v_max);
  return out;
}

// Analytic Jacobians of step() at (z, u). At the speed clamp the derivative
// of the speed row is taken as zero (the update is flat there).
inline LinearizedStep linearize(const StateVec& z, const ControlVec& u,
                                const DynamicsParams& p) {
  if (std::abs(u[1]) >= M_PI / 2.0)
    throw std::invalid_argument("dynamics: steering angle must satisfy |delta| < pi/2");
  const double theta = z[2], v = z[3];
  const double c = std::cos(theta), s = std::sin(theta);
  LinearizedStep lin;
  lin.A.setIdentity();
  lin.A(0, 2) = -v * s * p.dt;
  lin.A(0, 3) = c * p.dt;
  lin.A(1, 2) = v * c * p.dt;
  lin.A(1, 3) = s * p.dt;
  lin.A(2, 3) = std::tan(u[1]) / p.wheelbase * p.dt;
  lin.B.setZero();
  const double cd = std::cos(u[1]);
  lin.B(2, 1) = v * p.dt / (p.wheelbase * cd * cd);
  // strictly outside the speed range the update is flat; on the boundary the
  // inward one-sided derivative is the useful one
  const double v_next = v + u[0] * p.dt;
  if (v_next < 0.0 || v_next > p.v_max) {
    lin.A(3, 3) = 0.0;
  } else {
    lin.B(3, 0) = p.dt;
  }
  return lin;
}

inline std::vector<StateVec> rollout(const StateVec& z0,
                                     const std::vector<ControlVec>& controls,
                                     const DynamicsParams& p) {
  std::vector<StateVec> traj;
  traj.reserve(controls.size() + 1);
  traj.push_back(z0);
  for (const auto& u : controls) traj.push_back(step(traj.back(), u, p));
  return traj;
}

inline ControlVec clamp_control(const ControlVec& u, const DynamicsParams& p) {
  return {std::min(std::max(u[0], -p.a_max), p.a_max),
          std::min(std::max(u[1], -p.steer_max), p.steer_max)};
}

}  // namespace amod
