#include "rhec/nmpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rhec/error.hpp"
#include "rhec/robot_problem.hpp"

namespace rhec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double unwrap_near(double angle, double reference) { return reference + wrap_angle(angle - reference); }

void state_output(const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&, ResidualEval& out) {
  out.value = x;
  out.Jx = Eigen::MatrixXd::Identity(3, 3);
}

void input_output(const Eigen::VectorXd&, const Eigen::VectorXd& u, const Eigen::VectorXd&, ResidualEval& out) {
  out.value = u;
  out.Jx = Eigen::MatrixXd::Zero(1, 3);
  out.Ju = Eigen::MatrixXd::Identity(1, 1);
}

bool symmetric_psd(const Eigen::Matrix3d& M) {
  if (!M.isApprox(M.transpose(), 1e-12)) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-12;
}

struct Projection {
  double s;
  double distance;
};

Projection project(const ReferencePath& path, std::size_t seg, double px, double py) {
  const auto& a = path.points()[seg];
  const auto& b = path.points()[seg + 1];
  const Eigen::Vector2d ab = b - a;
  const Eigen::Vector2d ap = Eigen::Vector2d(px, py) - a;
  const double len2 = ab.squaredNorm();
  const double u = std::clamp(ap.dot(ab) / len2, 0.0, 1.0);
  const Eigen::Vector2d q = a + u * ab;
  const double seg_len = path.arc_lengths()[seg + 1] - path.arc_lengths()[seg];
  return {path.arc_lengths()[seg] + u * seg_len, std::hypot(px - q[0], py - q[1])};
}

ClosestPoint scan(const ReferencePath& path, double px, double py, std::size_t first, std::size_t last) {
  ClosestPoint best;
  best.distance = kInf;
  for (std::size_t seg = first; seg <= last; ++seg) {
    const Projection p = project(path, seg, px, py);
    if (p.distance < best.distance || (p.distance == best.distance && p.s < best.s)) {
      best = {p.s, p.distance, seg};
    }
  }
  return best;
}

}  // namespace

ReferencePath::ReferencePath(std::vector<Eigen::Vector2d> points, std::vector<bool> straight, bool backward)
    : points_(std::move(points)), straight_(std::move(straight)), backward_(backward) {
  if (points_.size() < 2) throw InvalidArgument("reference path needs at least two waypoints");
  if (straight_.empty()) straight_.assign(points_.size() - 1, true);
  if (straight_.size() != points_.size() - 1) throw InvalidArgument("segment tags do not match the waypoints");
  arc_.resize(points_.size());
  arc_[0] = 0.0;
  for (std::size_t i = 1; i < points_.size(); ++i) {
    const double d = (points_[i] - points_[i - 1]).norm();
    if (!(d > 0.0)) throw InvalidArgument("consecutive waypoints must be distinct");
    arc_[i] = arc_[i - 1] + d;
  }
  const std::size_t n = points_.size();
  tangent_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    const Eigen::Vector2d d = points_[hi] - points_[lo];
    const double a = std::atan2(d[1], d[0]);
    tangent_[i] = i == 0 ? a : unwrap_near(a, tangent_[i - 1]);
  }
}

std::size_t ReferencePath::segment_at(double s) const {
  if (s <= 0.0) return 0;
  if (s >= arc_.back()) return segments() - 1;
  const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
  return static_cast<std::size_t>(std::distance(arc_.begin(), it)) - 1;
}

Eigen::Vector2d ReferencePath::position(double s) const {
  const std::size_t seg = segment_at(s);
  const double sc = std::clamp(s, 0.0, arc_.back());
  const double u = (sc - arc_[seg]) / (arc_[seg + 1] - arc_[seg]);
  return points_[seg] + u * (points_[seg + 1] - points_[seg]);
}

double ReferencePath::heading(double s) const {
  const std::size_t seg = segment_at(s);
  const double sc = std::clamp(s, 0.0, arc_.back());
  const double u = (sc - arc_[seg]) / (arc_[seg + 1] - arc_[seg]);
  const double a = tangent_[seg] + u * (tangent_[seg + 1] - tangent_[seg]);
  return backward_ ? a + kPi : a;
}

ClosestPoint closest_point(const ReferencePath& path, double px, double py, std::optional<double> hint,
                           const ClosestPointSearch& search) {
  const std::size_t last = path.segments() - 1;
  if (!hint || !std::isfinite(*hint)) return scan(path, px, py, 0, last);
  const std::size_t first_seg = path.segment_at(*hint - search.behind);
  const std::size_t last_seg = path.segment_at(*hint + search.ahead);
  const ClosestPoint local = scan(path, px, py, first_seg, last_seg);
  if (local.distance > search.fallback_distance) return scan(path, px, py, 0, last);
  return local;
}

ControllerConfig ControllerConfig::with_q_variant(int variant) {
  ControllerConfig c;
  switch (variant) {
    case 1: c.Q = Eigen::Vector3d(1.0, 1.0, 10.0).asDiagonal(); break;
    case 2: c.Q = Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal(); break;
    case 3: c.Q = Eigen::Matrix3d::Identity(); break;
    default: throw ConfigError("unknown controller weight variant " + std::to_string(variant));
  }
  c.Q_N = 10.0 * c.Q;
  return c;
}

void ControllerConfig::validate() const {
  if (horizon < 1) throw ConfigError("controller horizon must be positive");
  if (!(sample_period > 0.0)) throw ConfigError("sample period must be positive");
  if (!symmetric_psd(Q) || !symmetric_psd(Q_N)) throw ConfigError("state weights must be symmetric PSD");
  if (!(R > 0.0)) throw ConfigError("input weight must be positive");
  if (!(omega_max > 0.0)) throw ConfigError("yaw-rate bound must be positive");
  if (!(forward_offset >= 0.0)) throw ConfigError("forward offset must be non-negative");
  if (!(nu_cmd > 0.0)) throw ConfigError("commanded speed must be positive");
  if (gauss_newton_iterations < 1) throw ConfigError("at least one Gauss-Newton iteration is required");
}

ReferenceHorizon generate_reference(const ReferencePath& path, const RobotState& pose, const ControllerConfig& cfg,
                                    double measured_omega, std::optional<double> hint) {
  const ClosestPoint cp = closest_point(path, pose.x, pose.y, hint);
  ReferenceHorizon ref;
  ref.closest_s = cp.s;
  ref.omega_ref = measured_omega;
  ref.nodes.reserve(static_cast<std::size_t>(cfg.horizon));
  double prev_heading = pose.theta;
  for (int i = 1; i <= cfg.horizon; ++i) {
    const double s = cp.s + cfg.forward_offset + i * cfg.nu_cmd * cfg.sample_period;
    const Eigen::Vector2d p = path.position(s);
    const double heading = unwrap_near(path.heading(s), prev_heading);
    prev_heading = heading;
    ref.nodes.emplace_back(p[0], p[1], heading);
  }
  return ref;
}

ShootingProblem build_tracking_problem(const ControllerConfig& cfg) {
  cfg.validate();
  const int N = cfg.horizon;
  ShootingProblem pr;
  pr.nx = 3;
  pr.nu = 1;
  pr.np = 3;
  pr.horizon = N;
  pr.dynamics = robot_dynamics(cfg.sample_period);
  pr.initial_state = BlockMode::Pinned;
  pr.parameters = BlockMode::Pinned;
  pr.angular_state = {false, false, true};
  pr.u_lb = Eigen::VectorXd::Constant(1, -cfg.omega_max);
  pr.u_ub = Eigen::VectorXd::Constant(1, cfg.omega_max);

  for (int i = 1; i <= N; ++i) {
    ResidualTerm t;
    t.node = i;
    t.model = state_output;
    t.reference = Eigen::Vector3d::Zero();
    t.weight = i == N ? cfg.Q_N : cfg.Q;
    t.angular = {false, false, true};
    pr.terms.push_back(std::move(t));
  }
  for (int j = 0; j < N; ++j) {
    ResidualTerm t;
    t.node = j;
    t.input = j;
    t.model = input_output;
    t.reference = Eigen::VectorXd::Zero(1);
    t.weight = Eigen::MatrixXd::Constant(1, 1, cfg.R);
    pr.terms.push_back(std::move(t));
  }
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < 3; ++c) pr.datum_slots.push_back({i, c});
  for (int j = 0; j < N; ++j) pr.datum_slots.push_back({N + j, 0});
  return pr;
}

std::vector<double> tracking_datum(const RobotState& state, const ParameterVector& params, const ReferenceHorizon& ref) {
  std::vector<double> d;
  d.reserve(6 + 4 * ref.nodes.size());
  d.insert(d.end(), {state.x, state.y, state.theta, params.nu, params.mu, params.kappa});
  for (const auto& n : ref.nodes) d.insert(d.end(), {n[0], n[1], n[2]});
  for (std::size_t j = 0; j < ref.nodes.size(); ++j) d.push_back(ref.omega_ref);
  return d;
}

HorizonSolution initial_tracking_guess(const ShootingProblem& problem, const RobotState& state,
                                       const ParameterVector& params, double omega) {
  const double u = std::clamp(omega, problem.u_lb[0], problem.u_ub[0]);
  std::vector<Eigen::VectorXd> inputs(static_cast<std::size_t>(problem.horizon), Eigen::VectorXd::Constant(1, u));
  return rollout(problem, state.vec(), params.vec(), inputs);
}

ControlResult control(const RobotState& state, const ParameterVector& params, const ReferenceHorizon& ref,
                      const ControllerConfig& cfg, const HorizonSolution& prev) {
  if (static_cast<int>(ref.nodes.size()) != cfg.horizon) throw InvalidArgument("reference horizon length mismatch");
  ShootingProblem pr = build_tracking_problem(cfg);
  const auto datum = tracking_datum(state, params, ref);
  apply_datum(pr, datum);
  const PreparedIteration pp = prepare(pr, prev);
  ControlResult r;
  r.solution = feedback(pp, datum);
  r.command = ControlInput{r.solution.inputs.front()[0]};
  return r;
}

PathTrackingController::PathTrackingController(ControllerConfig cfg)
    : cfg_(std::move(cfg)), problem_(build_tracking_problem(cfg_)) {}

void PathTrackingController::prepare() {
  if (!has_solution_ || prepped_) return;
  prepped_ = rhec::prepare(problem_, shift(solution_));
}

ControlInput PathTrackingController::feedback(const RobotState& state, const ParameterVector& params,
                                              const ReferenceHorizon& ref) {
  if (static_cast<int>(ref.nodes.size()) != cfg_.horizon) throw InvalidArgument("reference horizon length mismatch");
  if (!state.vec().allFinite() || !params.vec().allFinite()) throw NumericalError("controller received a non-finite estimate");
  const auto datum = tracking_datum(state, params, ref);
  if (!has_solution_) {
    apply_datum(problem_, datum);
    prepped_ = rhec::prepare(problem_, initial_tracking_guess(problem_, state, params, ref.omega_ref));
  } else if (!prepped_) {
    prepare();
  }
  solution_ = rhec::feedback(*prepped_, datum);
  apply_datum(problem_, datum);
  prepped_.reset();
  has_solution_ = true;

  for (int it = 1; it < cfg_.gauss_newton_iterations && solution_.kkt > cfg_.convergence_tolerance; ++it) {
    const double prep = solution_.prep_us;
    const double fb = solution_.fb_us;
    const PreparedIteration pp = rhec::prepare(problem_, solution_);
    solution_ = rhec::feedback(pp, datum);
    solution_.prep_us += prep;
    solution_.fb_us += fb;
    solution_.gauss_newton_iterations = it + 1;
  }
  return ControlInput{solution_.inputs.front()[0]};
}

}  // namespace rhec
