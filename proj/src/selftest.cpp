#include "rhec/selftest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <random>

#include "oracles/oracles.hpp"
#include "rhec/bench.hpp"
#include "rhec/box_qp.hpp"
#include "rhec/ekf.hpp"
#include "rhec/mhe.hpp"
#include "rhec/model.hpp"
#include "rhec/rti.hpp"

namespace rhec {

namespace {

struct Check {
  std::ostream& os;
  int failures = 0;

  void operator()(const char* name, bool ok, double metric) {
    os << (ok ? "PASS " : "FAIL ") << name << " (" << metric << ")\n";
    if (!ok) ++failures;
  }
};

double box_qp_vs_enumeration(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = dim(rng);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = U(rng);
    const Eigen::MatrixXd H = M * M.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), lb(n), ub(n);
    for (int i = 0; i < n; ++i) {
      g[i] = 2.0 * U(rng);
      lb[i] = -0.5 - 0.5 * std::abs(U(rng));
      ub[i] = 0.5 * std::abs(U(rng));
    }
    const Eigen::VectorXd ref = oracle::enumerate_box_qp(H, g, lb, ub);
    worst = std::max(worst, (solve_box_qp(H, g, lb, ub).z - ref).cwiseAbs().maxCoeff());
  }
  return worst;
}

double sensitivities_vs_fd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector3d x(3 * U(rng), 3 * U(rng), 3.2 * U(rng));
    const double w = 0.1 * U(rng);
    const Eigen::Vector3d p(0.5 + 0.5 * U(rng), 0.75 + 0.25 * U(rng), 0.75 + 0.25 * U(rng));
    Eigen::VectorXd z(7);
    z << x, w, p;
    auto f = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return integrate_step(KinematicModel::Traction, RobotState{v[0], v[1], v[2]}, ControlInput{v[3]},
                            ParameterVector{v[4], v[5], v[6]}, kSamplePeriod)
          .vec();
    };
    const Eigen::MatrixXd J = oracle::central_difference(f, z);
    const auto s = sensitivities(KinematicModel::Traction, RobotState::from(x), ControlInput{w},
                                 ParameterVector::from(p), kSamplePeriod);
    Eigen::MatrixXd A(3, 7);
    A << s.A, s.Bu, s.Bp;
    const double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
    worst = std::max(worst, (A - J).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

double rk4_vs_fine_euler() {
  const Eigen::Vector3d x(0.3, -0.2, 0.4);
  const Eigen::Vector3d p(0.5, 1.0, 1.0);
  const Eigen::Vector3d rk = integrate_step(KinematicModel::Traction, RobotState::from(x), ControlInput{0.1},
                                            ParameterVector::from(p), kSamplePeriod)
                                 .vec();
  return (rk - oracle::fine_euler(x, 0.1, p, kSamplePeriod)).head<2>().cwiseAbs().maxCoeff();
}

double closest_vs_brute(std::mt19937_64& rng) {
  PathSpec spec;
  const ReferencePath path = generate_path(spec);
  std::uniform_real_distribution<double> X(-5.0, 35.0), Y(-5.0, 22.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector2d q(X(rng), Y(rng));
    const auto ref = oracle::brute_nearest(path.points(), q);
    const auto got = closest_point(path, q[0], q[1]);
    worst = std::max({worst, std::abs(ref.distance - got.distance), std::abs(ref.s - got.s)});
  }
  return worst;
}

double scalar_information() {
  double info = 2.0;
  double ref = 2.0;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto step = information_update(Eigen::MatrixXd::Constant(1, 1, info), Eigen::MatrixXd::Constant(1, 1, 1.0),
                                         Eigen::MatrixXd::Constant(1, 1, 4.0), Eigen::MatrixXd::Constant(1, 1, 0.9),
                                         Eigen::MatrixXd::Constant(1, 1, 0.3));
    info = step.information(0, 0);
    ref = oracle::scalar_information_step(ref, 1.0, 4.0, 0.9, 0.3);
    worst = std::max(worst, std::abs(info - ref));
  }
  return worst;
}

double linear_quadratic_kkt() {
  ShootingProblem pr;
  pr.nx = 2;
  pr.nu = 1;
  pr.np = 0;
  pr.horizon = 5;
  pr.dynamics = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
    DynamicsEval ev;
    ev.A = (Eigen::Matrix2d() << 1.0, 0.2, 0.0, 1.0).finished();
    ev.Bu = Eigen::Vector2d(0.02, 0.2);
    ev.Bp = Eigen::MatrixXd(2, 0);
    ev.next = ev.A * x + ev.Bu * u;
    return ev;
  };
  pr.initial_state = BlockMode::Pinned;
  pr.angular_state = {false, false};
  pr.u_lb = Eigen::VectorXd::Constant(1, -0.5);
  pr.u_ub = Eigen::VectorXd::Constant(1, 0.5);
  for (int i = 1; i <= pr.horizon; ++i) {
    ResidualTerm t;
    t.node = i;
    t.model = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&, ResidualEval& out) {
      out.value = x;
      out.Jx = Eigen::MatrixXd::Identity(2, 2);
    };
    t.reference = Eigen::Vector2d::Zero();
    t.weight = Eigen::Matrix2d::Identity();
    t.angular = {false, false};
    pr.terms.push_back(t);
  }
  const std::vector<double> datum{1.0, -0.3};
  const HorizonSolution guess = rollout(pr, Eigen::Vector2d(1.0, -0.3), Eigen::VectorXd(),
                                        std::vector<Eigen::VectorXd>(5, Eigen::VectorXd::Zero(1)));
  return feedback(prepare(pr, guess), datum).kkt;
}

// Stationary robot: heading decouples and is a pure random walk, the
// (x, y, nu) block obeys a time-invariant Riccati recursion.
double riccati_fixed_point() {
  EkfConfig cfg;
  EkfBelief b;
  b.cov = cfg.initial_covariance_scale * cfg.process_noise;
  const double theta0 = b.cov(2, 2);
  const int steps = 1000;
  for (int k = 0; k < steps; ++k) {
    b = ekf_predict(b, ControlInput{0.0}, cfg);
    MeasurementSample z;
    z.x = b.mean[0];
    z.y = b.mean[1];
    z.nu = b.mean[3];
    b = ekf_correct(b, z, cfg);
  }
  const std::array<int, 3> obs{0, 1, 3};
  const Eigen::Matrix4d A4 = ekf_transition_jacobian(b.mean, cfg.sample_period);
  Eigen::Matrix3d A, W, P;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      A(i, j) = A4(obs[i], obs[j]);
      W(i, j) = cfg.process_noise(obs[i], obs[j]);
      P(i, j) = b.cov(obs[i], obs[j]);
    }
  const Eigen::MatrixXd C = Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd V = cfg.measurement_noise.topLeftCorner<3, 3>();
  const Eigen::MatrixXd Pc = oracle::riccati_corrected(oracle::riccati_fixed_point(A, C, V, W, W), C, V);
  const double block = (P - Pc).cwiseAbs().maxCoeff() / std::max(1.0, Pc.cwiseAbs().maxCoeff());
  const double heading = std::abs(b.cov(2, 2) - (theta0 + steps * cfg.process_noise(2, 2))) / b.cov(2, 2);
  return std::max(block, heading);
}

}  // namespace

int run_selftest(std::ostream& os) {
  std::mt19937_64 rng(20240101);
  Check check{os};
  const double qp = box_qp_vs_enumeration(rng);
  check("box QP vs 3^n enumeration, 200 instances", qp < 1e-8, qp);
  const double fd = sensitivities_vs_fd(rng);
  check("RK4 sensitivities vs central differences", fd < 1e-6, fd);
  const double eu = rk4_vs_fine_euler();
  check("RK4 step vs fine Euler", eu < 1e-8, eu);
  const double cp = closest_vs_brute(rng);
  check("closest point vs brute-force projection", cp < 1e-9, cp);
  const double si = scalar_information();
  check("information update vs scalar recursion", si < 1e-12, si);
  const double lq = linear_quadratic_kkt();
  check("linear-quadratic instance KKT residual", lq <= 1e-12, lq);
  const double ric = riccati_fixed_point();
  check("EKF covariance vs Riccati fixed point", ric < 1e-9, ric);
  return check.failures;
}

}  // namespace rhec
