#pragma once

// Space-based path tracking with nonlinear MPC.
//
// The reference over the horizon is anchored at the closest point of the path
// plus a fixed forward offset, and advances by nu_cmd * T_s per node. The yaw
// reference follows the path tangent (plus pi when driving backwards) and the
// input reference is the measured yaw rate.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <optional>
#include <span>
#include <vector>

#include "rhec/model.hpp"
#include "rhec/rti.hpp"

namespace rhec {

class ReferencePath {
 public:
  /// `straight` tags each segment (size = points - 1); empty means all straight.
  /// Throws InvalidArgument for fewer than two points or repeated points.
  ReferencePath(std::vector<Eigen::Vector2d> points, std::vector<bool> straight = {}, bool backward = false);

  std::size_t size() const { return points_.size(); }
  std::size_t segments() const { return points_.size() - 1; }
  double length() const { return arc_.back(); }
  bool backward() const { return backward_; }
  const std::vector<Eigen::Vector2d>& points() const { return points_; }
  const std::vector<double>& arc_lengths() const { return arc_; }
  bool segment_straight(std::size_t seg) const { return straight_[seg]; }

  /// Segment containing arc length `s` (clamped to the path).
  std::size_t segment_at(double s) const;
  Eigen::Vector2d position(double s) const;
  /// Driving direction at `s`: tangent angle (central differences over the
  /// waypoints, one-sided at the ends) plus pi when backward. Unwrapped along
  /// the path.
  double heading(double s) const;

 private:
  std::vector<Eigen::Vector2d> points_;
  std::vector<double> arc_;
  std::vector<bool> straight_;
  std::vector<double> tangent_;  // per waypoint, unwrapped
  bool backward_;
};

struct ClosestPoint {
  double s = 0.0;
  double distance = 0.0;
  std::size_t segment = 0;
};

struct ClosestPointSearch {
  double behind = 2.0;            ///< arc length searched behind the hint [m]
  double ahead = 4.0;             ///< arc length searched ahead of the hint [m]
  double fallback_distance = 1.0; ///< full scan when the local match is farther [m]
};

/// Nearest point of the polyline; ties go to the smaller arc length. With a
/// finite `hint` only a window around it is searched, falling back to a full
/// scan when the local match is farther than `fallback_distance`.
ClosestPoint closest_point(const ReferencePath& path, double px, double py,
                           std::optional<double> hint = std::nullopt, const ClosestPointSearch& search = {});

struct ControllerConfig {
  int horizon = 15;
  double sample_period = kSamplePeriod;
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();
  double R = 10.0;
  Eigen::Matrix3d Q_N = 10.0 * Eigen::Matrix3d::Identity();
  double omega_max = 0.1;        ///< [rad/s]
  double forward_offset = 0.3;   ///< d0 [m]
  double nu_cmd = 0.5;           ///< [m/s]
  int gauss_newton_iterations = 1;
  double convergence_tolerance = 1e-10;

  /// Yaw-weight variants: 1 -> diag(1,1,10), 2 -> diag(1,1,0), 3 -> diag(1,1,1).
  /// Q_N follows as 10 Q.
  static ControllerConfig with_q_variant(int variant);
  void validate() const;
};

struct ReferenceHorizon {
  std::vector<Eigen::Vector3d> nodes;  ///< (x_r, y_r, theta_r) for nodes 1..N
  double omega_ref = 0.0;
  double closest_s = 0.0;
};

ReferenceHorizon generate_reference(const ReferencePath& path, const RobotState& pose, const ControllerConfig& cfg,
                                    double measured_omega, std::optional<double> hint = std::nullopt);

struct ControlResult {
  ControlInput command;
  HorizonSolution solution;
};

/// Tracking problem with the initial state and parameters pinned (datum).
ShootingProblem build_tracking_problem(const ControllerConfig& cfg);

/// Datum layout for `build_tracking_problem`.
std::vector<double> tracking_datum(const RobotState& state, const ParameterVector& params, const ReferenceHorizon& ref);

/// Default warm start: constant input omega_ref (clipped) from the estimate.
HorizonSolution initial_tracking_guess(const ShootingProblem& problem, const RobotState& state,
                                       const ParameterVector& params, double omega);

/// One real-time iteration from `prev`; returns the first optimized input.
ControlResult control(const RobotState& state, const ParameterVector& params, const ReferenceHorizon& ref,
                      const ControllerConfig& cfg, const HorizonSolution& prev);

class PathTrackingController {
 public:
  explicit PathTrackingController(ControllerConfig cfg);

  /// Shift and linearize the previous solution ahead of the next estimate.
  void prepare();
  ControlInput feedback(const RobotState& state, const ParameterVector& params, const ReferenceHorizon& ref);

  bool has_solution() const { return has_solution_; }
  const ControllerConfig& config() const { return cfg_; }
  const HorizonSolution& solution() const { return solution_; }

 private:
  ControllerConfig cfg_;
  ShootingProblem problem_;
  HorizonSolution solution_;
  std::optional<PreparedIteration> prepped_;
  bool has_solution_ = false;
};

}  // namespace rhec
