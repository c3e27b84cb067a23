#include "rhec/mhe.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "rhec/error.hpp"
#include "rhec/robot_problem.hpp"

namespace rhec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void node_output(const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd& p, ResidualEval& out) {
  out.value = Eigen::Vector3d(x[0], x[1], p[0]);
  out.Jx = Eigen::MatrixXd::Zero(3, 3);
  out.Jx(0, 0) = 1.0;
  out.Jx(1, 1) = 1.0;
  out.Jp = Eigen::MatrixXd::Zero(3, 3);
  out.Jp(2, 0) = 1.0;
}

void input_output(const Eigen::VectorXd&, const Eigen::VectorXd& u, const Eigen::VectorXd&, ResidualEval& out) {
  out.value = u;
  out.Jx = Eigen::MatrixXd::Zero(1, 3);
  out.Ju = Eigen::MatrixXd::Identity(1, 1);
}

void arrival_output(const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd& p, ResidualEval& out) {
  out.value.resize(6);
  out.value << x, p;
  out.Jx = Eigen::MatrixXd::Zero(6, 3);
  out.Jx.topRows(3).setIdentity();
  out.Jp = Eigen::MatrixXd::Zero(6, 3);
  out.Jp.bottomRows(3).setIdentity();
}

bool symmetric_positive_definite(const Eigen::MatrixXd& M) {
  if (!M.isApprox(M.transpose(), 1e-12)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  return llt.info() == Eigen::Success;
}

ShootingProblem build_problem(std::span<const MeasurementSample> samples, const ArrivalCost& arrival,
                              const EstimatorConfig& cfg) {
  if (samples.size() < 2) throw InvalidArgument("estimation needs at least two samples");
  const int M = static_cast<int>(samples.size()) - 1;
  ShootingProblem pr;
  pr.nx = 3;
  pr.nu = 1;
  pr.np = 3;
  pr.horizon = M;
  pr.dynamics = robot_dynamics(cfg.sample_period);
  pr.initial_state = BlockMode::Free;
  pr.parameters = BlockMode::Free;
  pr.angular_state = {false, false, true};
  pr.x0_lb = Eigen::Vector3d::Constant(-kInf);
  pr.x0_ub = Eigen::Vector3d::Constant(kInf);
  pr.p_lb = cfg.param_lb;
  pr.p_ub = cfg.param_ub;
  pr.u_lb = Eigen::VectorXd::Constant(1, -kInf);
  pr.u_ub = Eigen::VectorXd::Constant(1, kInf);

  const Eigen::Matrix3d node_weight = cfg.measurement_information.topLeftCorner<3, 3>();
  const Eigen::MatrixXd rate_weight = Eigen::MatrixXd::Constant(1, 1, cfg.measurement_information(3, 3));

  pr.terms.reserve(static_cast<std::size_t>(2 * M + 2));
  ResidualTerm arr;
  arr.node = 0;
  arr.model = arrival_output;
  arr.reference.resize(6);
  arr.reference << arrival.xi_hat, arrival.p_hat;
  arr.weight = arrival.information;
  arr.angular = {false, false, true, false, false, false};
  pr.terms.push_back(std::move(arr));

  for (int i = 0; i <= M; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    ResidualTerm t;
    t.node = i;
    t.model = node_output;
    t.reference = Eigen::Vector3d(s.x, s.y, s.nu);
    t.weight = node_weight;
    pr.terms.push_back(std::move(t));
  }
  // The yaw rate sampled at t_{i+1} is the rate that acted over interval i.
  for (int i = 0; i < M; ++i) {
    ResidualTerm t;
    t.node = i;
    t.input = i;
    t.model = input_output;
    t.reference = Eigen::VectorXd::Constant(1, samples[static_cast<std::size_t>(i + 1)].omega);
    t.weight = rate_weight;
    pr.terms.push_back(std::move(t));
  }
  const int newest = 1 + M;
  const int last_rate = 1 + (M + 1) + (M - 1);
  pr.datum_slots = {{newest, 0}, {newest, 1}, {newest, 2}, {last_rate, 0}};
  return pr;
}

std::vector<MeasurementSample> samples_of(const MeasurementWindow& w) {
  std::vector<MeasurementSample> out;
  out.reserve(w.size() + 1);
  for (std::size_t i = 0; i < w.size(); ++i) out.push_back(w[i].sample);
  return out;
}

std::array<double, 4> datum_of(const MeasurementSample& s) { return {s.x, s.y, s.nu, s.omega}; }

Estimate newest_estimate(const HorizonSolution& sol) {
  Estimate e;
  e.state = RobotState::from(sol.states.back());
  e.params = ParameterVector::from(sol.params);
  e.kkt = sol.kkt;
  e.prep_us = sol.prep_us;
  e.fb_us = sol.fb_us;
  return e;
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& M, bool& regularized) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  const double floor = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i] > floor)) {
      ev[i] = floor;
      regularized = true;
    }
  }
  Eigen::MatrixXd inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

}  // namespace

Eigen::Matrix4d EstimatorConfig::default_measurement_information() {
  return Eigen::Vector4d(1.0 / (0.03 * 0.03), 1.0 / (0.03 * 0.03), 1.0 / (0.05 * 0.05), 1.0 / (0.0175 * 0.0175))
      .asDiagonal();
}

Matrix6d EstimatorConfig::default_process_weight() {
  Vector6d d;
  d << 10.0 * 10.0, 10.0 * 10.0, 0.1 * 0.1, 1.0, 0.25 * 0.25, 0.25 * 0.25;
  return d.asDiagonal();
}

void EstimatorConfig::validate() const {
  if (horizon < 2) throw ConfigError("estimator horizon must be at least 2");
  if (!(sample_period > 0.0)) throw ConfigError("sample period must be positive");
  if (!symmetric_positive_definite(measurement_information))
    throw ConfigError("measurement information must be symmetric positive definite");
  if (!symmetric_positive_definite(process_weight)) throw ConfigError("process weight must be symmetric positive definite");
  if (measurement_information.row(3).head<3>().cwiseAbs().maxCoeff() != 0.0)
    throw ConfigError("yaw-rate measurement must be uncorrelated with position and speed");
  for (int i = 0; i < 3; ++i)
    if (!(param_lb[i] <= param_ub[i])) throw ConfigError("inconsistent parameter bounds");
  if (param_lb[0] < 0.0 || param_lb[1] < 0.0 || param_lb[2] < 0.0 || param_ub[1] > 1.0 || param_ub[2] > 1.0)
    throw ConfigError("traction bounds must lie within [0, 1] and speed must be non-negative");
  if (gauss_newton_iterations < 1) throw ConfigError("at least one Gauss-Newton iteration is required");
}

MeasurementWindow::MeasurementWindow(std::size_t capacity, double sample_period)
    : capacity_(capacity), sample_period_(sample_period) {
  if (capacity < 2) throw InvalidArgument("window capacity must be at least 2");
}

std::optional<WindowEntry> MeasurementWindow::push(const MeasurementSample& sample, ControlInput applied) {
  if (!entries_.empty()) {
    const double expected = entries_.back().sample.t + sample_period_;
    if (std::abs(sample.t - expected) > 1e-6)
      throw InvalidArgument("measurement timestamp is out of order or leaves a gap");
  }
  std::optional<WindowEntry> evicted;
  if (full()) evicted = pop_front();
  entries_.push_back({sample, applied});
  return evicted;
}

std::optional<WindowEntry> MeasurementWindow::pop_front() {
  if (entries_.empty()) return std::nullopt;
  WindowEntry e = entries_.front();
  entries_.pop_front();
  return e;
}

std::optional<WindowEntry> push_measurement(MeasurementWindow& window, const MeasurementSample& sample,
                                            ControlInput input) {
  return window.push(sample, input);
}

ArrivalCost ArrivalCost::initial(const MeasurementSample& first, const MeasurementSample& second,
                                 const EstimatorConfig& cfg) {
  ArrivalCost a;
  const double dx = second.x - first.x;
  const double dy = second.y - first.y;
  const double heading = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx);
  a.xi_hat = {first.x, first.y, heading};
  a.p_hat = {first.nu, 1.0, 1.0};
  a.information = cfg.initial_information_scale * cfg.process_weight.inverse();
  return a;
}

double ArrivalCost::bound_margin(const EstimatorConfig& cfg) const {
  const Matrix6d diff = cfg.process_weight.inverse() - information;
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (diff + diff.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

InformationStep information_update(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& C,
                                   const Eigen::MatrixXd& measurement_information, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& W) {
  InformationStep out;
  const Eigen::MatrixXd corrected = prior + C.transpose() * measurement_information * C;
  const Eigen::MatrixXd cov = inverse_spd(corrected, out.regularized);
  const Eigen::MatrixXd predicted = A * cov * A.transpose() + W;
  out.information = inverse_spd(predicted, out.regularized);
  return out;
}

ArrivalCost update_arrival_cost(const ArrivalCost& arrival, const MeasurementSample& evicted,
                                ControlInput evicted_input, const EstimatorConfig& cfg, const HorizonSolution& prev) {
  if (prev.states.size() < 2) throw InvalidArgument("arrival-cost update needs a solution with at least one interval");
  const RobotState anchor = RobotState::from(prev.states[0]);
  const ParameterVector params = ParameterVector::from(prev.params);
  const auto sens = sensitivities(KinematicModel::Traction, anchor, evicted_input, params, cfg.sample_period);

  Matrix6d A = Matrix6d::Identity();
  A.topLeftCorner<3, 3>() = sens.A;
  A.topRightCorner<3, 3>() = sens.Bp;
  Eigen::Matrix<double, 3, 6> C = Eigen::Matrix<double, 3, 6>::Zero();
  C(0, 0) = 1.0;
  C(1, 1) = 1.0;
  C(2, 3) = 1.0;
  (void)evicted;  // the measurement enters through C' H_k C; the prior mean is refreshed below

  const InformationStep step =
      information_update(arrival.information, C, cfg.measurement_information.topLeftCorner<3, 3>(), A, cfg.process_weight);

  ArrivalCost next;
  next.information = step.information;
  next.regularized = step.regularized;
  next.xi_hat = prev.states[1];
  next.p_hat = prev.params;
  return next;
}

ShootingProblem build_estimation_problem(const MeasurementWindow& window, const ArrivalCost& arrival,
                                         const EstimatorConfig& cfg) {
  const auto samples = samples_of(window);
  return build_problem(samples, arrival, cfg);
}

EstimationResult estimate(const MeasurementWindow& window, const ArrivalCost& arrival, const EstimatorConfig& cfg,
                          const HorizonSolution& prev) {
  const ShootingProblem pr = build_estimation_problem(window, arrival, cfg);
  const auto datum = datum_of(window.back().sample);
  const PreparedIteration pp = prepare(pr, prev);
  EstimationResult r;
  r.solution = feedback(pp, datum);
  r.estimate = newest_estimate(r.solution);
  return r;
}

MovingHorizonEstimator::MovingHorizonEstimator(EstimatorConfig cfg)
    : cfg_(std::move(cfg)), window_(static_cast<std::size_t>(cfg_.horizon + 1), cfg_.sample_period) {
  cfg_.validate();
}

void MovingHorizonEstimator::record_applied(ControlInput u) {
  if (!window_.empty()) window_.set_last_applied(u);
}

void MovingHorizonEstimator::prepare() {
  if (!has_solution_ || prepped_) return;
  const double dt = cfg_.sample_period;
  const ControlInput applied = window_.back().applied;
  const ParameterVector params = ParameterVector::from(solution_.params);

  HorizonSolution guess;
  if (window_.full()) {
    const WindowEntry oldest = window_.front();
    arrival_ = update_arrival_cost(arrival_, oldest.sample, ControlInput{solution_.inputs[0][0]}, cfg_, solution_);
    if (arrival_.regularized) ++regularization_events_;
    window_.pop_front();
    guess = shift(solution_);
    const std::size_t n = guess.inputs.size();
    guess.inputs[n - 1][0] = applied.omega;
    guess.states[n] =
        integrate_step(KinematicModel::Traction, RobotState::from(guess.states[n - 1]), applied, params, dt).vec();
  } else {
    guess = solution_;
    guess.inputs.push_back(Eigen::VectorXd::Constant(1, applied.omega));
    guess.states.push_back(
        integrate_step(KinematicModel::Traction, RobotState::from(guess.states.back()), applied, params, dt).vec());
    if (!guess.active_set.empty()) guess.active_set.push_back(Activity::Free);
  }

  auto samples = samples_of(window_);
  MeasurementSample placeholder;
  placeholder.t = window_.back().sample.t + dt;
  placeholder.x = guess.states.back()[0];
  placeholder.y = guess.states.back()[1];
  placeholder.nu = guess.params[0];
  placeholder.omega = applied.omega;
  samples.push_back(placeholder);

  problem_ = build_problem(samples, arrival_, cfg_);
  prepped_ = rhec::prepare(problem_, guess);
}

std::optional<Estimate> MovingHorizonEstimator::feedback(const MeasurementSample& sample) {
  if (window_.empty()) {
    window_.push(sample, ControlInput{});
    return std::nullopt;
  }
  const auto datum = datum_of(sample);

  if (!has_solution_) {
    window_.push(sample, ControlInput{});
    arrival_ = ArrivalCost::initial(window_[0].sample, window_[1].sample, cfg_);
    problem_ = build_estimation_problem(window_, arrival_, cfg_);
    const HorizonSolution guess =
        rollout(problem_, arrival_.xi_hat, arrival_.p_hat, {Eigen::VectorXd::Constant(1, sample.omega)});
    prepped_ = rhec::prepare(problem_, guess);
  } else {
    if (!prepped_) prepare();
    window_.push(sample, ControlInput{});
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
  return newest_estimate(solution_);
}

}  // namespace rhec
