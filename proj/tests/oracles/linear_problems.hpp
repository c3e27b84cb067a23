#pragma once

// Random linear-quadratic shooting problems and their uncondensed solution.

#include <random>
#include <vector>

#include "oracles/oracles.hpp"
#include "rhec/rti.hpp"

namespace rhec::testing {

struct LinearSystem {
  Eigen::MatrixXd A, B;
};

inline ResidualTerm state_term(int node, const Eigen::VectorXd& ref, const Eigen::MatrixXd& W) {
  ResidualTerm t;
  t.node = node;
  t.model = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&, ResidualEval& out) {
    out.value = x;
    out.Jx = Eigen::MatrixXd::Identity(x.size(), x.size());
  };
  t.reference = ref;
  t.weight = W;
  return t;
}

inline ResidualTerm input_term(int node, const Eigen::VectorXd& ref, const Eigen::MatrixXd& W, int nx) {
  ResidualTerm t;
  t.node = node;
  t.input = node;
  t.model = [nx](const Eigen::VectorXd&, const Eigen::VectorXd& u, const Eigen::VectorXd&, ResidualEval& out) {
    out.value = u;
    out.Jx = Eigen::MatrixXd::Zero(u.size(), nx);
    out.Ju = Eigen::MatrixXd::Identity(u.size(), u.size());
  };
  t.reference = ref;
  t.weight = W;
  return t;
}

// Linear-quadratic instance with the initial state pinned and wide input bounds.
inline ShootingProblem linear_problem(const LinearSystem& sys, int N, std::mt19937_64& rng, double u_bound = 1e6) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int nx = static_cast<int>(sys.A.rows());
  const int nu = static_cast<int>(sys.B.cols());
  ShootingProblem pr;
  pr.nx = nx;
  pr.nu = nu;
  pr.horizon = N;
  pr.dynamics = [sys](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
    DynamicsEval ev;
    ev.A = sys.A;
    ev.Bu = sys.B;
    ev.Bp = Eigen::MatrixXd(sys.A.rows(), 0);
    ev.next = sys.A * x + sys.B * u;
    return ev;
  };
  pr.initial_state = BlockMode::Pinned;
  pr.angular_state.assign(static_cast<std::size_t>(nx), false);
  pr.u_lb = Eigen::VectorXd::Constant(nu, -u_bound);
  pr.u_ub = Eigen::VectorXd::Constant(nu, u_bound);
  for (int i = 1; i <= N; ++i) {
    Eigen::VectorXd ref(nx);
    for (int k = 0; k < nx; ++k) ref[k] = U(rng);
    Eigen::VectorXd w(nx);
    for (int k = 0; k < nx; ++k) w[k] = 0.5 + std::abs(U(rng));
    pr.terms.push_back(state_term(i, ref, w.asDiagonal()));
  }
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd ref(nu);
    for (int k = 0; k < nu; ++k) ref[k] = U(rng);
    pr.terms.push_back(input_term(i, ref, Eigen::MatrixXd::Identity(nu, nu) * 0.3, nx));
  }
  return pr;
}

inline LinearSystem random_system(int nx, int nu, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  LinearSystem s{Eigen::MatrixXd(nx, nx), Eigen::MatrixXd(nx, nu)};
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) s.A(i, j) = (i == j ? 1.0 : 0.0) + 0.3 * U(rng);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nu; ++j) s.B(i, j) = U(rng);
  return s;
}

inline HorizonSolution zero_guess(const ShootingProblem& pr, const Eigen::VectorXd& x0) {
  return rollout(pr, x0, Eigen::VectorXd::Zero(pr.np),
                 std::vector<Eigen::VectorXd>(static_cast<std::size_t>(pr.horizon), Eigen::VectorXd::Zero(pr.nu)));
}

// Full sparse formulation over v = (x_0..x_N, u_0..u_{N-1}).
inline Eigen::VectorXd sparse_solution(const ShootingProblem& pr, const LinearSystem& sys, const Eigen::VectorXd& x0) {
  const int nx = pr.nx, nu = pr.nu, N = pr.horizon;
  const int nv = (N + 1) * nx + N * nu;
  int nr = 0;
  for (const auto& t : pr.terms) nr += static_cast<int>(t.reference.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nr, nv);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(nr);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(nr, nr);
  int row = 0;
  for (const auto& t : pr.terms) {
    const int m = static_cast<int>(t.reference.size());
    if (t.input < 0) J.block(row, t.node * nx, m, nx).setIdentity();
    else J.block(row, (N + 1) * nx + t.input * nu, m, nu).setIdentity();
    r.segment(row, m) = -t.reference;
    W.block(row, row, m, m) = t.weight;
    row += m;
  }
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero((N + 1) * nx, nv);
  Eigen::VectorXd e = Eigen::VectorXd::Zero((N + 1) * nx);
  E.block(0, 0, nx, nx).setIdentity();
  e.head(nx) = x0;
  for (int i = 0; i < N; ++i) {
    E.block((i + 1) * nx, i * nx, nx, nx) = sys.A;
    E.block((i + 1) * nx, (N + 1) * nx + i * nu, nx, nu) = sys.B;
    E.block((i + 1) * nx, (i + 1) * nx, nx, nx) -= Eigen::MatrixXd::Identity(nx, nx);
  }
  return oracle::sparse_kkt_solve(J, r, W, E, e);
}

}  // namespace rhec::testing
