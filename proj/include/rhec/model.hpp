#pragma once

// Kinematics of a tracked (skid-steer) robot with traction coefficients.
//
// State (x, y, theta), parameters (nu, mu, kappa), input omega. The
// traction-augmented model scales the commanded speed by mu and the commanded
// yaw rate by kappa; mu = kappa = 1 recovers the slip-free unicycle.

#include <Eigen/Core>

namespace rhec {

inline constexpr double kPi = 3.14159265358979323846;

/// Sampling period used throughout the stack [s].
inline constexpr double kSamplePeriod = 0.2;

struct RobotState {
  double x = 0.0;      ///< east [m]
  double y = 0.0;      ///< north [m]
  double theta = 0.0;  ///< yaw [rad], unwrapped

  Eigen::Vector3d vec() const { return {x, y, theta}; }
  static RobotState from(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

struct ParameterVector {
  double nu = 0.0;     ///< linear speed [m/s]
  double mu = 1.0;     ///< longitudinal traction [-]
  double kappa = 1.0;  ///< angular traction [-]

  Eigen::Vector3d vec() const { return {nu, mu, kappa}; }
  static ParameterVector from(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

struct ControlInput {
  double omega = 0.0;  ///< yaw rate [rad/s]
};

/// Output vector (x, y, nu, omega). Yaw is never part of it.
struct MeasurementSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double nu = 0.0;
  double omega = 0.0;
};

struct StateDerivative {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  Eigen::Vector3d vec() const { return {dx, dy, dtheta}; }
};

enum class KinematicModel { Traditional, Traction };

StateDerivative dynamics_traction(const RobotState& state, ControlInput input,
                                  const ParameterVector& params);

StateDerivative dynamics_traditional(const RobotState& state, ControlInput input, double speed);

/// Selection map z = (x, y, nu, omega); the timestamp is left at zero.
MeasurementSample measure(const RobotState& state, ControlInput input, const ParameterVector& params);

/// One classical RK4 step with input and parameters held over `dt`.
/// The traditional model ignores mu and kappa. Throws NumericalError on a
/// non-finite result and InvalidArgument for dt <= 0.
RobotState integrate_step(KinematicModel model, const RobotState& state, ControlInput input,
                          const ParameterVector& params, double dt);

struct StepSensitivities {
  RobotState next;
  Eigen::Matrix3d A;   ///< d next / d state
  Eigen::Vector3d Bu;  ///< d next / d omega
  Eigen::Matrix3d Bp;  ///< d next / d (nu, mu, kappa)
};

/// Exact Jacobians of `integrate_step` (forward-mode through the RK4 stages).
StepSensitivities sensitivities(KinematicModel model, const RobotState& state, ControlInput input,
                                const ParameterVector& params, double dt);

/// Maps any finite angle into (-pi, pi].
double wrap_angle(double a);

}  // namespace rhec
