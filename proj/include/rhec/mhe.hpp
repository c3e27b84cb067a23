#pragma once

// Constrained moving-horizon estimation of pose, speed and traction
// coefficients.
//
// The window holds the last N+1 samples. Parameters are constant inside the
// window and behave as a random walk only through the arrival cost, which is
// maintained by an EKF-style information update on the joint
// (state, parameter) vector each time a sample leaves the window.

#include <Eigen/Core>
#include <deque>
#include <optional>
#include <span>

#include "rhec/model.hpp"
#include "rhec/rti.hpp"

namespace rhec {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

struct EstimatorConfig {
  int horizon = 15;  ///< N; the window holds N+1 samples
  double sample_period = kSamplePeriod;
  /// Measurement information H_k for (x, y, nu, omega); omega must be uncorrelated.
  Eigen::Matrix4d measurement_information = default_measurement_information();
  /// Extended process / parameter pseudo-variance W for (x, y, theta, nu, mu, kappa).
  Matrix6d process_weight = default_process_weight();
  Eigen::Vector3d param_lb{0.0, 0.0, 0.0};
  Eigen::Vector3d param_ub{2.0, 1.0, 1.0};
  double initial_information_scale = 1e-3;
  /// Gauss-Newton iterations per sample. 1 is the real-time iteration; larger
  /// values turn the estimator into a converged reference solver.
  int gauss_newton_iterations = 1;
  double convergence_tolerance = 1e-10;

  static Eigen::Matrix4d default_measurement_information();
  static Matrix6d default_process_weight();
  void validate() const;
};

struct WindowEntry {
  MeasurementSample sample;
  ControlInput applied;  ///< command issued right after the sample
};

class MeasurementWindow {
 public:
  MeasurementWindow(std::size_t capacity, double sample_period);

  /// Appends a sample; returns the evicted oldest entry when at capacity.
  /// Throws InvalidArgument unless sample.t = last.t + T_s (within 1e-6 s).
  std::optional<WindowEntry> push(const MeasurementSample& sample, ControlInput applied);
  std::optional<WindowEntry> pop_front();

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return entries_.size() == capacity_; }
  bool empty() const { return entries_.empty(); }
  const WindowEntry& operator[](std::size_t i) const { return entries_[i]; }
  const WindowEntry& front() const { return entries_.front(); }
  const WindowEntry& back() const { return entries_.back(); }
  double sample_period() const { return sample_period_; }
  /// Time covered by a full window, N * T_s.
  double span_seconds() const { return static_cast<double>(capacity_ - 1) * sample_period_; }
  void set_last_applied(ControlInput u) { entries_.back().applied = u; }

 private:
  std::size_t capacity_;
  double sample_period_;
  std::deque<WindowEntry> entries_;
};

/// Free-function form of MeasurementWindow::push.
std::optional<WindowEntry> push_measurement(MeasurementWindow& window, const MeasurementSample& sample,
                                            ControlInput input);

struct ArrivalCost {
  Eigen::Vector3d xi_hat = Eigen::Vector3d::Zero();
  Eigen::Vector3d p_hat{0.0, 1.0, 1.0};
  Matrix6d information = Matrix6d::Zero();  ///< H_N
  bool regularized = false;                 ///< set when an update had to repair a covariance

  /// Prior from the first fix, heading from the first two fixes, no-slip traction.
  static ArrivalCost initial(const MeasurementSample& first, const MeasurementSample& second,
                             const EstimatorConfig& cfg);
  /// Smallest eigenvalue of W^-1 - H_N.
  double bound_margin(const EstimatorConfig& cfg) const;
};

struct InformationStep {
  Eigen::MatrixXd information;
  bool regularized = false;
};

/// Information-form EKF step: correct H with C' Hm C, then propagate the
/// covariance through A and add W. With Hm = 0 the correction is a no-op.
InformationStep information_update(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& C,
                                   const Eigen::MatrixXd& measurement_information, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& W);

/// Absorbs the evicted oldest sample into the arrival cost. The linearization
/// point and the refreshed prior are taken from `prev`, the last estimator
/// solution over the window that still contained `evicted` at node 0.
ArrivalCost update_arrival_cost(const ArrivalCost& arrival, const MeasurementSample& evicted,
                                ControlInput evicted_input, const EstimatorConfig& cfg, const HorizonSolution& prev);

struct Estimate {
  RobotState state;
  ParameterVector params;
  double kkt = 0.0;
  double prep_us = 0.0;
  double fb_us = 0.0;
};

/// Builds the least-squares problem for the window contents.
ShootingProblem build_estimation_problem(const MeasurementWindow& window, const ArrivalCost& arrival,
                                         const EstimatorConfig& cfg);

struct EstimationResult {
  Estimate estimate;
  HorizonSolution solution;
};

/// One real-time iteration on the full window (newest sample as the datum).
/// `prev` must have window.size() - 1 intervals.
EstimationResult estimate(const MeasurementWindow& window, const ArrivalCost& arrival, const EstimatorConfig& cfg,
                          const HorizonSolution& prev);

/// Stateful estimator with the prepare / feedback split.
class MovingHorizonEstimator {
 public:
  explicit MovingHorizonEstimator(EstimatorConfig cfg);

  /// Work that does not need the next sample: evict the oldest sample into
  /// the arrival cost, shift the horizon and linearize. No-op until the first
  /// estimate exists.
  void prepare();

  /// Consumes the sample taken at the current instant. Returns nothing for
  /// the very first sample (heading needs two fixes).
  std::optional<Estimate> feedback(const MeasurementSample& sample);

  /// Records the command applied after the latest sample.
  void record_applied(ControlInput u);

  bool ready() const { return has_solution_; }
  const EstimatorConfig& config() const { return cfg_; }
  const ArrivalCost& arrival() const { return arrival_; }
  const MeasurementWindow& window() const { return window_; }
  const HorizonSolution& solution() const { return solution_; }
  int regularization_events() const { return regularization_events_; }

 private:
  void refresh_problem();

  EstimatorConfig cfg_;
  MeasurementWindow window_;
  ArrivalCost arrival_;
  ShootingProblem problem_;
  HorizonSolution solution_;
  std::optional<PreparedIteration> prepped_;
  bool has_solution_ = false;
  int regularization_events_ = 0;
};

}  // namespace rhec
