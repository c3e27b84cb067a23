#include "rhec/model.hpp"

#include <cmath>

#include "rhec/error.hpp"

namespace rhec {

namespace {

using Mat37 = Eigen::Matrix<double, 3, 7>;

struct Derivative {
  Eigen::Vector3d f;
  Mat37 J;  // d f / d (state, omega, nu, mu, kappa), partials only
};

Derivative evaluate(KinematicModel model, const Eigen::Vector3d& s, double omega,
                    const Eigen::Vector3d& p) {
  const double c = std::cos(s[2]);
  const double sn = std::sin(s[2]);
  const double nu = p[0];
  const bool traction = model == KinematicModel::Traction;
  const double mu = traction ? p[1] : 1.0;
  const double kappa = traction ? p[2] : 1.0;
  const double speed = mu * nu;

  Derivative d;
  d.f = {speed * c, speed * sn, kappa * omega};
  d.J.setZero();
  d.J(0, 2) = -speed * sn;
  d.J(1, 2) = speed * c;
  d.J(2, 3) = kappa;
  d.J(0, 4) = mu * c;
  d.J(1, 4) = mu * sn;
  if (traction) {
    d.J(0, 5) = nu * c;
    d.J(1, 5) = nu * sn;
    d.J(2, 6) = omega;
  }
  return d;
}

}  // namespace

StateDerivative dynamics_traction(const RobotState& state, ControlInput input,
                                  const ParameterVector& params) {
  const double v = params.mu * params.nu;
  return {v * std::cos(state.theta), v * std::sin(state.theta), params.kappa * input.omega};
}

StateDerivative dynamics_traditional(const RobotState& state, ControlInput input, double speed) {
  return {speed * std::cos(state.theta), speed * std::sin(state.theta), input.omega};
}

MeasurementSample measure(const RobotState& state, ControlInput input, const ParameterVector& params) {
  return {0.0, state.x, state.y, params.nu, input.omega};
}

StepSensitivities sensitivities(KinematicModel model, const RobotState& state, ControlInput input,
                                const ParameterVector& params, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integration step must be positive");

  const Eigen::Vector3d s0 = state.vec();
  const Eigen::Vector3d p = params.vec();
  Mat37 S0 = Mat37::Zero();
  S0.leftCols<3>().setIdentity();

  // Stage states and their total derivatives w.r.t. (state, omega, params).
  const Derivative d1 = evaluate(model, s0, input.omega, p);
  const Mat37 K1 = d1.J;  // S0 = [I 0]

  const Eigen::Vector3d s2 = s0 + 0.5 * dt * d1.f;
  const Mat37 S2 = S0 + 0.5 * dt * K1;
  const Derivative d2 = evaluate(model, s2, input.omega, p);
  Mat37 K2 = d2.J.leftCols<3>() * S2;
  K2.rightCols<4>() += d2.J.rightCols<4>();

  const Eigen::Vector3d s3 = s0 + 0.5 * dt * d2.f;
  const Mat37 S3 = S0 + 0.5 * dt * K2;
  const Derivative d3 = evaluate(model, s3, input.omega, p);
  Mat37 K3 = d3.J.leftCols<3>() * S3;
  K3.rightCols<4>() += d3.J.rightCols<4>();

  const Eigen::Vector3d s4 = s0 + dt * d3.f;
  const Mat37 S4 = S0 + dt * K3;
  const Derivative d4 = evaluate(model, s4, input.omega, p);
  Mat37 K4 = d4.J.leftCols<3>() * S4;
  K4.rightCols<4>() += d4.J.rightCols<4>();

  const Eigen::Vector3d next = s0 + dt / 6.0 * (d1.f + 2.0 * d2.f + 2.0 * d3.f + d4.f);
  const Mat37 J = S0 + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4);

  if (!next.allFinite() || !J.allFinite()) throw NumericalError("integration produced a non-finite state");

  StepSensitivities out;
  out.next = RobotState::from(next);
  out.A = J.leftCols<3>();
  out.Bu = J.col(3);
  out.Bp = J.rightCols<3>();
  return out;
}

RobotState integrate_step(KinematicModel model, const RobotState& state, ControlInput input,
                          const ParameterVector& params, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integration step must be positive");
  const Eigen::Vector3d s0 = state.vec();
  const Eigen::Vector3d p = params.vec();
  auto f = [&](const Eigen::Vector3d& s) { return evaluate(model, s, input.omega, p).f; };
  const Eigen::Vector3d k1 = f(s0);
  const Eigen::Vector3d k2 = f(s0 + 0.5 * dt * k1);
  const Eigen::Vector3d k3 = f(s0 + 0.5 * dt * k2);
  const Eigen::Vector3d k4 = f(s0 + dt * k3);
  const Eigen::Vector3d next = s0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("integration produced a non-finite state");
  return RobotState::from(next);
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * kPi;
  double r = std::fmod(a + kPi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= kPi;
  if (r <= -kPi) r = kPi;
  return r;
}

}  // namespace rhec
