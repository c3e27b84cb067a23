#include "rhec/ekf.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>

#include "rhec/error.hpp"

namespace rhec {

namespace {

Eigen::Matrix4d symmetrized(const Eigen::Matrix4d& P) { return 0.5 * (P + P.transpose()); }

bool spd(const Eigen::Matrix4d& M) {
  Eigen::LLT<Eigen::Matrix4d> llt(symmetrized(M));
  return M.allFinite() && llt.info() == Eigen::Success;
}

}  // namespace

void EkfConfig::validate() const {
  if (!(sample_period > 0.0)) throw ConfigError("EKF sample period must be positive");
  if (!spd(process_noise)) throw ConfigError("EKF process noise must be SPD");
  if (!spd(measurement_noise)) throw ConfigError("EKF measurement noise must be SPD");
  if (!(initial_covariance_scale > 0.0)) throw ConfigError("EKF initial covariance scale must be positive");
}

Eigen::Matrix4d ekf_transition_jacobian(const Eigen::Vector4d& m, double dt) {
  const double c = std::cos(m[2]);
  const double s = std::sin(m[2]);
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  A(0, 2) = -dt * m[3] * s;
  A(0, 3) = dt * c;
  A(1, 2) = dt * m[3] * c;
  A(1, 3) = dt * s;
  return A;
}

EkfBelief ekf_predict(const EkfBelief& belief, ControlInput input, const EkfConfig& cfg) {
  const double dt = cfg.sample_period;
  const Eigen::Vector4d& m = belief.mean;
  EkfBelief out;
  out.mean = m;
  out.mean[0] += dt * m[3] * std::cos(m[2]);
  out.mean[1] += dt * m[3] * std::sin(m[2]);
  out.mean[2] += dt * input.omega;
  const Eigen::Matrix4d A = ekf_transition_jacobian(m, dt);
  out.cov = symmetrized(A * belief.cov * A.transpose() + cfg.process_noise);
  return out;
}

EkfBelief ekf_correct(const EkfBelief& belief, const MeasurementSample& z, const EkfConfig& cfg) {
  Eigen::Matrix<double, 3, 4> C = Eigen::Matrix<double, 3, 4>::Zero();
  C(0, 0) = 1.0;
  C(1, 1) = 1.0;
  C(2, 3) = 1.0;
  const Eigen::Matrix3d V = cfg.measurement_noise.topLeftCorner<3, 3>();
  const Eigen::Matrix3d S = C * belief.cov * C.transpose() + V;
  Eigen::LDLT<Eigen::Matrix3d> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
    throw NumericalError("EKF innovation covariance is singular");
  const Eigen::Matrix<double, 4, 3> K = ldlt.solve(C * belief.cov).transpose();
  const Eigen::Vector3d innovation(z.x - belief.mean[0], z.y - belief.mean[1], z.nu - belief.mean[3]);
  EkfBelief out;
  out.mean = belief.mean + K * innovation;
  const Eigen::Matrix4d IKC = Eigen::Matrix4d::Identity() - K * C;
  // Joseph form
  out.cov = symmetrized(IKC * belief.cov * IKC.transpose() + K * V * K.transpose());
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw NumericalError("EKF correction produced non-finite values");
  return out;
}

ExtendedKalmanFilter::ExtendedKalmanFilter(EkfConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::optional<Estimate> ExtendedKalmanFilter::feedback(const MeasurementSample& sample) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!first_) {
    first_ = sample;
    return std::nullopt;
  }
  if (!initialized_) {
    const MeasurementSample& f = *first_;
    belief_.mean = Eigen::Vector4d(f.x, f.y, std::atan2(sample.y - f.y, sample.x - f.x), f.nu);
    belief_.cov = cfg_.initial_covariance_scale * cfg_.process_noise;
    initialized_ = true;
  }
  belief_ = ekf_correct(ekf_predict(belief_, ControlInput{sample.omega}, cfg_), sample, cfg_);
  Estimate e;
  e.state = RobotState{belief_.mean[0], belief_.mean[1], belief_.mean[2]};
  e.params = ParameterVector{belief_.mean[3], 1.0, 1.0};
  e.fb_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

}  // namespace rhec
