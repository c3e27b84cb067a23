#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <random>

#include "oracles/oracles.hpp"
#include "rhec/error.hpp"
#include "rhec/mhe.hpp"

using namespace rhec;

namespace {

MeasurementSample sample_at(double t, const RobotState& s, double nu, double omega) {
  MeasurementSample z = measure(s, ControlInput{omega}, {nu, 1.0, 1.0});
  z.t = t;
  return z;
}

// Noise-free samples from the traction model; omega[k] is the rate over (t_{k-1}, t_k].
std::vector<MeasurementSample> simulate(int n, RobotState s, const ParameterVector& p, double omega_amp) {
  std::vector<MeasurementSample> out;
  double omega = 0.0;
  for (int k = 0; k < n; ++k) {
    out.push_back(sample_at(k * kSamplePeriod, s, p.nu, omega));
    omega = omega_amp * std::sin(0.4 * k);
    s = integrate_step(KinematicModel::Traction, s, ControlInput{omega}, p, kSamplePeriod);
  }
  return out;
}

double min_eig(const Matrix6d& M) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("window ring semantics") {
  MeasurementWindow w(3, 0.2);
  MeasurementSample z;
  for (int k = 0; k < 3; ++k) {
    z.t = 0.2 * k;
    z.x = k;
    CHECK_FALSE(push_measurement(w, z, ControlInput{}).has_value());
  }
  CHECK(w.full());
  z.t = 0.6;
  z.x = 3;
  const auto ev = push_measurement(w, z, ControlInput{});
  REQUIRE(ev.has_value());
  CHECK(ev->sample.x == 0.0);
  CHECK(w.size() == 3);
  CHECK(w.front().sample.x == 1.0);

  z.t = 1.0;  // gap
  CHECK_THROWS_AS(w.push(z, ControlInput{}), InvalidArgument);
  z.t = 0.6;  // repeat
  CHECK_THROWS_AS(w.push(z, ControlInput{}), InvalidArgument);

  EstimatorConfig cfg;
  MeasurementWindow full(static_cast<std::size_t>(cfg.horizon + 1), cfg.sample_period);
  CHECK(full.span_seconds() == doctest::Approx(3.0));
}

TEST_CASE("noise-free frozen window recovers the traction coefficients") {
  EstimatorConfig cfg;
  const ParameterVector truth{0.5, 0.9, 0.8};
  const auto data = simulate(cfg.horizon + 1, {0.0, 0.0, 0.3}, truth, 0.1);
  MeasurementWindow w(static_cast<std::size_t>(cfg.horizon + 1), cfg.sample_period);
  for (const auto& z : data) w.push(z, ControlInput{});
  ArrivalCost arrival;  // no prior information
  arrival.xi_hat = Eigen::Vector3d(data[0].x, data[0].y, 0.0);
  arrival.information.setZero();

  const ShootingProblem pr = build_estimation_problem(w, arrival, cfg);
  std::vector<Eigen::VectorXd> inputs;
  for (int i = 0; i < cfg.horizon; ++i) inputs.push_back(Eigen::VectorXd::Constant(1, data[static_cast<std::size_t>(i + 1)].omega));
  HorizonSolution sol = rollout(pr, Eigen::Vector3d(data[0].x, data[0].y, 0.25), Eigen::Vector3d(0.5, 1.0, 1.0), inputs);
  for (int it = 0; it < 30; ++it) sol = estimate(w, arrival, cfg, sol).solution;
  CHECK(std::abs(sol.params[1] - truth.mu) < 1e-6);
  CHECK(std::abs(sol.params[2] - truth.kappa) < 1e-6);
  CHECK(sol.kkt < 1e-8);
}

TEST_CASE("faster-than-commanded motion clamps mu at 1") {
  EstimatorConfig cfg;
  MovingHorizonEstimator mhe(cfg);
  RobotState s{0.0, 0.0, 0.0};
  for (int k = 0; k < 40; ++k) {
    mhe.prepare();
    const auto e = mhe.feedback(sample_at(k * kSamplePeriod, s, 0.5, 0.0));
    mhe.record_applied(ControlInput{0.0});
    if (e) {
      CHECK(e->params.mu <= 1.0);
      CHECK(e->params.mu >= 0.0);
      CHECK(e->params.kappa <= 1.0);
      CHECK(e->params.kappa >= 0.0);
    }
    s = integrate_step(KinematicModel::Traction, s, ControlInput{0.0}, {0.5, 1.4, 1.0}, kSamplePeriod);
  }
  CHECK(mhe.solution().params[1] == 1.0);
}

TEST_CASE("yaw on a straight segment converges to the displacement direction") {
  const double heading = 0.7;
  MovingHorizonEstimator mhe(EstimatorConfig{});
  RobotState s{2.0, -1.0, heading};
  std::optional<Estimate> e;
  for (int k = 0; k <= 15; ++k) {
    mhe.prepare();
    e = mhe.feedback(sample_at(k * kSamplePeriod, s, 0.5, 0.0));
    mhe.record_applied(ControlInput{0.0});
    s = integrate_step(KinematicModel::Traction, s, ControlInput{0.0}, {0.5, 0.85, 0.75}, kSamplePeriod);
  }
  REQUIRE(e.has_value());
  CHECK(std::abs(wrap_angle(e->state.theta - heading)) < 0.02);
}

TEST_CASE("estimator returns nothing for the first sample") {
  MovingHorizonEstimator mhe(EstimatorConfig{});
  mhe.prepare();
  CHECK_FALSE(mhe.feedback(sample_at(0.0, {}, 0.5, 0.0)).has_value());
  mhe.prepare();
  CHECK(mhe.feedback(sample_at(0.2, {0.1, 0.0, 0.0}, 0.5, 0.0)).has_value());
}

TEST_CASE("arrival information stays below the inverse process weight") {
  EstimatorConfig cfg;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  MeasurementSample first, second;
  second.x = 0.1;
  ArrivalCost a = ArrivalCost::initial(first, second, cfg);
  double worst = a.bound_margin(cfg);
  bool regularized = false;
  for (int k = 0; k < 10000; ++k) {
    HorizonSolution prev;
    prev.states = {Eigen::Vector3d(10 * U(rng), 10 * U(rng), 3.2 * U(rng)), Eigen::Vector3d(U(rng), U(rng), U(rng))};
    prev.inputs = {Eigen::VectorXd::Constant(1, 0.1 * U(rng))};
    prev.params = Eigen::Vector3d(1.0 + U(rng), 0.5 + 0.5 * U(rng), 0.5 + 0.5 * U(rng));
    a = update_arrival_cost(a, MeasurementSample{}, ControlInput{prev.inputs[0][0]}, cfg, prev);
    worst = std::min(worst, a.bound_margin(cfg));
    regularized |= a.regularized;
    CHECK(min_eig(a.information) >= -1e-9);
  }
  CHECK(worst >= -1e-9);
  CHECK_FALSE(regularized);
}

TEST_CASE("zero measurement information: pure propagation") {
  const Eigen::MatrixXd prior = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd A = (Eigen::Matrix2d() << 1.0, 0.2, 0.0, 1.0).finished();
  const Eigen::MatrixXd W = Eigen::Vector2d(0.1, 0.1).asDiagonal();
  const auto step = information_update(prior, C, Eigen::MatrixXd::Zero(2, 2), A, W);
  const Eigen::MatrixXd expected = (A * prior.inverse() * A.transpose() + W).inverse();
  CHECK((step.information - expected).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::MatrixXd info = prior;
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd next = information_update(info, C, Eigen::MatrixXd::Zero(2, 2), A, W).information;
    CHECK(next.trace() < info.trace());
    info = next;
  }
}

TEST_CASE("scalar information recursion") {
  double info = 0.5, ref = 0.5;
  for (int k = 0; k < 100; ++k) {
    info = information_update(Eigen::MatrixXd::Constant(1, 1, info), Eigen::MatrixXd::Constant(1, 1, 2.0),
                              Eigen::MatrixXd::Constant(1, 1, 3.0), Eigen::MatrixXd::Constant(1, 1, 1.1),
                              Eigen::MatrixXd::Constant(1, 1, 0.05))
               .information(0, 0);
    ref = oracle::scalar_information_step(ref, 2.0, 3.0, 1.1, 0.05);
    CHECK(std::abs(info - ref) < 1e-12);
  }
}

TEST_CASE("config validation") {
  EstimatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.horizon = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EstimatorConfig{};
  cfg.param_ub[1] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EstimatorConfig{};
  cfg.measurement_information(3, 0) = cfg.measurement_information(0, 3) = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("estimates are deterministic") {
  auto run = [] {
    MovingHorizonEstimator mhe(EstimatorConfig{});
    const auto data = simulate(40, {0.0, 0.0, 0.1}, {0.5, 0.85, 0.75}, 0.08);
    std::vector<double> out;
    for (const auto& z : data) {
      mhe.prepare();
      if (auto e = mhe.feedback(z)) out.push_back(e->params.kappa);
      mhe.record_applied(ControlInput{z.omega});
    }
    return out;
  };
  CHECK(run() == run());
}
