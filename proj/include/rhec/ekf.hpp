#pragma once

// EKF on the slip-free unicycle, state (x, y, theta, nu) with nu as a random
// walk. Traction coefficients are not estimated.

#include <Eigen/Core>
#include <optional>

#include "rhec/mhe.hpp"
#include "rhec/model.hpp"

namespace rhec {

struct EkfConfig {
  double sample_period = kSamplePeriod;
  Eigen::Matrix4d process_noise = Eigen::Vector4d(100.0, 100.0, 0.01, 1.0).asDiagonal();
  /// V_k for (x, y, nu, omega); the omega row is not used by the correction.
  Eigen::Matrix4d measurement_noise = Eigen::Vector4d(0.03 * 0.03, 0.03 * 0.03, 0.05 * 0.05, 0.0175 * 0.0175).asDiagonal();
  double initial_covariance_scale = 10.0;

  void validate() const;
};

struct EkfBelief {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();  ///< (x, y, theta, nu)
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
};

/// Jacobian of the Euler-discretized unicycle w.r.t. (x, y, theta, nu).
Eigen::Matrix4d ekf_transition_jacobian(const Eigen::Vector4d& mean, double dt);

EkfBelief ekf_predict(const EkfBelief& belief, ControlInput input, const EkfConfig& cfg);

/// Correction with the (x, y, nu) rows of the output map. Throws
/// NumericalError when the innovation covariance is singular.
EkfBelief ekf_correct(const EkfBelief& belief, const MeasurementSample& z, const EkfConfig& cfg);

class ExtendedKalmanFilter {
 public:
  explicit ExtendedKalmanFilter(EkfConfig cfg);

  void prepare() {}
  /// Nothing for the first sample; from the second on, predict with the
  /// measured yaw rate of the new sample and correct.
  std::optional<Estimate> feedback(const MeasurementSample& sample);

  bool ready() const { return initialized_; }
  const EkfBelief& belief() const { return belief_; }

 private:
  EkfConfig cfg_;
  EkfBelief belief_;
  std::optional<MeasurementSample> first_;
  bool initialized_ = false;
};

}  // namespace rhec
