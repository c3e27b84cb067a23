#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <random>

#include "oracles/oracles.hpp"
#include "rhec/ekf.hpp"
#include "rhec/error.hpp"
#include "rhec/mhe.hpp"
#include "rhec/sim.hpp"

using namespace rhec;

namespace {

Eigen::Vector4d euler_step(const Eigen::Vector4d& m, double omega, double dt) {
  return {m[0] + dt * m[3] * std::cos(m[2]), m[1] + dt * m[3] * std::sin(m[2]), m[2] + dt * omega, m[3]};
}

struct Trace {
  std::vector<MeasurementSample> z;
  std::vector<RobotState> truth;
};

Trace drive(const TerrainProfile& terrain, const SensorSpec& sensor_spec, int n, double amp) {
  Plant plant(PlantConfig{}, terrain, {0.0, 0.0, 0.0});
  Sensor sensor(sensor_spec);
  Trace tr;
  for (int k = 0; k < n; ++k) {
    MeasurementSample z = sense(plant, sensor);
    z.t = k * kSamplePeriod;
    tr.z.push_back(z);
    tr.truth.push_back(plant.truth());
    plant_step(plant, ControlInput{amp * std::sin(0.05 * k)}, kSamplePeriod);
  }
  return tr;
}

// Unconstrained EKF with (x, y, theta, mu, kappa), measured speed and yaw rate
// as inputs. Test-only: shows why traction is not estimated this way.
struct TractionEkf {
  Eigen::Matrix<double, 5, 1> m;
  Eigen::Matrix<double, 5, 5> P;
  Eigen::Matrix<double, 5, 5> W;
  Eigen::Matrix2d V;

  void step(const MeasurementSample& prev, const MeasurementSample& z) {
    const double dt = kSamplePeriod;
    const double v = prev.nu;
    const double w = z.omega;
    Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Identity();
    A(0, 2) = -dt * m[3] * v * std::sin(m[2]);
    A(0, 3) = dt * v * std::cos(m[2]);
    A(1, 2) = dt * m[3] * v * std::cos(m[2]);
    A(1, 3) = dt * v * std::sin(m[2]);
    A(2, 4) = dt * w;
    m[0] += dt * m[3] * v * std::cos(m[2]);
    m[1] += dt * m[3] * v * std::sin(m[2]);
    m[2] += dt * m[4] * w;
    P = A * P * A.transpose() + W;
    Eigen::Matrix<double, 2, 5> C = Eigen::Matrix<double, 2, 5>::Zero();
    C(0, 0) = C(1, 1) = 1.0;
    const Eigen::Matrix2d S = C * P * C.transpose() + V;
    const Eigen::Matrix<double, 5, 2> K = P * C.transpose() * S.inverse();
    m += K * (Eigen::Vector2d(z.x, z.y) - C * m);
    P = (Eigen::Matrix<double, 5, 5>::Identity() - K * C) * P;
  }
};

}  // namespace

TEST_CASE("prediction") {
  EkfConfig cfg;
  EkfBelief b;
  b.mean = Eigen::Vector4d(1.0, 2.0, 0.3, 0.0);
  b.cov.setZero();
  const EkfBelief p = ekf_predict(b, ControlInput{0.0}, cfg);
  CHECK((p.mean - b.mean).norm() == 0.0);
  CHECK((p.cov - cfg.process_noise).cwiseAbs().maxCoeff() < 1e-15);

  b.mean = Eigen::Vector4d(0.0, 0.0, 0.0, 1.0);
  const EkfBelief q = ekf_predict(b, ControlInput{0.0}, cfg);
  CHECK(q.mean[0] == doctest::Approx(0.2));
  CHECK(q.mean[1] == 0.0);
}

TEST_CASE("transition Jacobian matches finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector4d m(5 * U(rng), 5 * U(rng), 3 * U(rng), 1 + U(rng));
    const double w = 0.1 * U(rng);
    const Eigen::MatrixXd J = oracle::central_difference(
        [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return euler_step(v, w, 0.2); }, Eigen::VectorXd(m));
    CHECK((ekf_transition_jacobian(m, 0.2) - J).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("correction") {
  EkfConfig cfg;
  EkfBelief b;
  b.mean = Eigen::Vector4d(1.0, -1.0, 0.4, 0.5);
  b.cov = Eigen::Vector4d(0.5, 0.2, 0.1, 0.3).asDiagonal();
  SUBCASE("zero innovation leaves the mean") {
    MeasurementSample z;
    z.x = 1.0;
    z.y = -1.0;
    z.nu = 0.5;
    const EkfBelief c = ekf_correct(b, z, cfg);
    CHECK((c.mean - b.mean).norm() == 0.0);
    CHECK(c.cov.trace() < b.cov.trace());
  }
  SUBCASE("scalar gain with a diagonal covariance") {
    MeasurementSample z;
    z.x = 2.0;
    z.y = -1.0;
    z.nu = 0.5;
    const EkfBelief c = ekf_correct(b, z, cfg);
    const double k = oracle::scalar_kalman_gain(0.5, cfg.measurement_noise(0, 0));
    CHECK(std::abs(c.mean[0] - (1.0 + k)) < 1e-12);
    CHECK(std::abs(c.cov(0, 0) - (1 - k) * 0.5) < 1e-12);
  }
  SUBCASE("singular innovation covariance") {
    EkfConfig bad = cfg;
    bad.measurement_noise.setZero();
    EkfBelief z = b;
    z.cov.setZero();
    CHECK_THROWS_AS(ekf_correct(z, MeasurementSample{}, bad), NumericalError);
  }
}

TEST_CASE("stationary covariance converges to the Riccati fixed point") {
  EkfConfig cfg;
  EkfBelief b;
  b.cov = cfg.initial_covariance_scale * cfg.process_noise;
  const double theta0 = b.cov(2, 2);
  for (int k = 0; k < 1000; ++k) {
    b = ekf_predict(b, ControlInput{0.0}, cfg);
    MeasurementSample z;
    z.x = b.mean[0];
    z.y = b.mean[1];
    z.nu = b.mean[3];
    b = ekf_correct(b, z, cfg);
  }
  // heading is unobservable at rest: a pure random walk
  CHECK(b.cov(2, 2) == doctest::Approx(theta0 + 1000 * cfg.process_noise(2, 2)).epsilon(1e-12));
  const int obs[3] = {0, 1, 3};
  Eigen::Matrix3d A, W, P;
  const Eigen::Matrix4d A4 = ekf_transition_jacobian(b.mean, cfg.sample_period);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      A(i, j) = A4(obs[i], obs[j]);
      W(i, j) = cfg.process_noise(obs[i], obs[j]);
      P(i, j) = b.cov(obs[i], obs[j]);
    }
  const Eigen::MatrixXd C = Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd V = cfg.measurement_noise.topLeftCorner<3, 3>();
  const Eigen::MatrixXd ref = oracle::riccati_corrected(oracle::riccati_fixed_point(A, C, V, W, W), C, V);
  CHECK((P - ref).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("belief covariance stays symmetric PSD on a noisy run") {
  const Trace tr = drive(TerrainProfile{}, SensorSpec{}, 600, 0.1);
  ExtendedKalmanFilter ekf(EkfConfig{});
  CHECK_FALSE(ekf.feedback(tr.z[0]).has_value());
  for (std::size_t k = 1; k < tr.z.size(); ++k) {
    const auto e = ekf.feedback(tr.z[k]);
    REQUIRE(e.has_value());
    CHECK(e->params.mu == 1.0);
    CHECK(e->params.kappa == 1.0);
    const Eigen::Matrix4d& P = ekf.belief().cov;
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(P, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
}

TEST_CASE("initialization mirrors the estimator: first fix, two-fix heading") {
  ExtendedKalmanFilter ekf(EkfConfig{});
  MeasurementSample a, b;
  a.x = 1.0;
  a.y = 1.0;
  a.nu = 0.5;
  b.t = 0.2;
  b.x = 1.0;
  b.y = 1.1;
  b.nu = 0.5;
  ekf.feedback(a);
  const auto e = ekf.feedback(b);
  REQUIRE(e.has_value());
  CHECK(e->state.theta == doctest::Approx(kPi / 2).epsilon(1e-6));
}

TEST_CASE("diagnostic: an unconstrained EKF drives traction estimates negative") {
  TerrainProfile wet;
  wet.mu = 0.05;
  wet.kappa = 0.75;
  const Trace tr = drive(wet, SensorSpec{}, 600, 0.1);
  TractionEkf f;
  f.m << tr.z[0].x, tr.z[0].y, 0.0, 1.0, 1.0;
  f.P = Eigen::Matrix<double, 5, 1>(0.01, 0.01, 0.1, 0.25, 0.25).asDiagonal();
  f.W = Eigen::Matrix<double, 5, 1>(1e-4, 1e-4, 1e-4, 1e-3, 1e-3).asDiagonal();
  f.V = Eigen::Vector2d(0.03 * 0.03, 0.03 * 0.03).asDiagonal();
  double min_mu = 1.0;
  for (std::size_t k = 1; k < tr.z.size(); ++k) {
    f.step(tr.z[k - 1], tr.z[k]);
    min_mu = std::min(min_mu, f.m[3]);
  }
  MESSAGE("minimum unconstrained mu estimate: " << min_mu);
  CHECK(min_mu < 0.0);
}

// Mean position RMSE over 5 seeds of slip-free open-loop data.
struct RmsePair {
  double ekf = 0.0;
  double mhe = 0.0;
};

RmsePair slip_free_rmse(const EkfConfig& ec) {
  TerrainProfile dry;
  dry.mu = 1.0;
  dry.kappa = 1.0;
  double ekf_sum = 0.0, mhe_sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SensorSpec spec;
    spec.seed = seed;
    const Trace tr = drive(dry, spec, 600, 0.1);
    ExtendedKalmanFilter ekf(ec);
    MovingHorizonEstimator mhe(EstimatorConfig{});
    for (std::size_t k = 0; k < tr.z.size(); ++k) {
      mhe.prepare();
      const auto a = ekf.feedback(tr.z[k]);
      const auto b = mhe.feedback(tr.z[k]);
      mhe.record_applied(ControlInput{0.1 * std::sin(0.05 * static_cast<double>(k))});
      if (k < 50 || !a || !b) continue;
      const RobotState& t = tr.truth[k];
      ekf_sum += std::pow(a->state.x - t.x, 2) + std::pow(a->state.y - t.y, 2);
      mhe_sum += std::pow(b->state.x - t.x, 2) + std::pow(b->state.y - t.y, 2);
      ++n;
    }
  }
  return {std::sqrt(ekf_sum / static_cast<double>(n)), std::sqrt(mhe_sum / static_cast<double>(n))};
}

TEST_CASE("without slip the EKF matches the MHE under matched process noise") {
  EkfConfig matched;
  matched.process_noise = Eigen::Vector4d(1e-4, 1e-4, 1e-4, 1e-3).asDiagonal();
  const RmsePair r = slip_free_rmse(matched);
  MESSAGE("position RMSE ekf " << r.ekf << " mhe " << r.mhe);
  CHECK(std::abs(r.ekf - r.mhe) <= 0.2 * r.mhe);
}

TEST_CASE("with the default process noise the EKF passes the fixes through") {
  const RmsePair r = slip_free_rmse(EkfConfig{});
  const double raw = std::sqrt(2.0) * 0.03;
  MESSAGE("position RMSE ekf " << r.ekf << " mhe " << r.mhe << " raw fixes " << raw);
  CHECK(std::abs(r.ekf - raw) < 0.1 * raw);
  CHECK(r.mhe < r.ekf);
}
