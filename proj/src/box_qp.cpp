#include "rhec/box_qp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rhec/error.hpp"

namespace rhec {

namespace {

bool near_singular(const Eigen::MatrixXd& H, double ratio) {
  if (H.rows() == 0) return false;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success) return true;
  const Eigen::VectorXd d = ldlt.vectorD();
  const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  return d.minCoeff() <= ratio * scale;
}

}  // namespace

BoxQpResult solve_box_qp(const Eigen::MatrixXd& H_in, const Eigen::VectorXd& g, const Eigen::VectorXd& lb,
                         const Eigen::VectorXd& ub, const std::vector<Activity>* warm_start,
                         const BoxQpOptions& options) {
  const Eigen::Index n = g.size();
  if (H_in.rows() != n || H_in.cols() != n || lb.size() != n || ub.size() != n)
    throw InvalidArgument("box QP dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(lb[i] <= ub[i])) throw InvalidArgument("box QP lower bound exceeds upper bound");
  if (!H_in.allFinite() || !g.allFinite()) throw NumericalError("box QP data is not finite");

  BoxQpResult res;
  Eigen::MatrixXd H = 0.5 * (H_in + H_in.transpose());
  if (near_singular(H, options.singular_ratio)) {
    H.diagonal().array() += options.regularization;
    res.regularized = true;
  }

  res.active.assign(static_cast<std::size_t>(n), Activity::Free);
  res.z = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    res.z[i] = std::clamp(0.0, lb[i], ub[i]);
    Activity a = Activity::Free;
    if (warm_start && static_cast<Eigen::Index>(warm_start->size()) == n) a = (*warm_start)[i];
    if (lb[i] == ub[i]) a = Activity::Lower;
    if (a == Activity::Lower && std::isfinite(lb[i])) {
      res.z[i] = lb[i];
    } else if (a == Activity::Upper && std::isfinite(ub[i])) {
      res.z[i] = ub[i];
    } else {
      a = Activity::Free;
    }
    res.active[i] = a;
  }

  const int cap = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(5 * n + 20);
  const double tol = 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> free_idx;
  free_idx.reserve(static_cast<std::size_t>(n));

  for (int iter = 1; iter <= cap; ++iter) {
    res.iterations = iter;
    free_idx.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (res.active[i] == Activity::Free) free_idx.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free_idx.size());

    if (nf > 0) {
      // Newton step on the free subspace with active variables held fixed.
      Eigen::MatrixXd Hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        double r = g[i];
        for (Eigen::Index j = 0; j < n; ++j)
          if (res.active[j] != Activity::Free) r += H(i, j) * res.z[j];
        rhs[a] = -r;
        for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(i, free_idx[b]);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(Hff);
      if (ldlt.info() != Eigen::Success) throw NumericalError("box QP reduced Hessian factorization failed");
      const Eigen::VectorXd target = ldlt.solve(rhs);
      if (!target.allFinite()) throw NumericalError("box QP step is not finite");

      double alpha = 1.0;
      Eigen::Index blocking = -1;
      Activity blocking_side = Activity::Free;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        const double d = target[a] - res.z[i];
        if (d < 0.0 && std::isfinite(lb[i])) {
          const double step = (lb[i] - res.z[i]) / d;
          if (step < alpha) { alpha = step; blocking = i; blocking_side = Activity::Lower; }
        } else if (d > 0.0 && std::isfinite(ub[i])) {
          const double step = (ub[i] - res.z[i]) / d;
          if (step < alpha) { alpha = step; blocking = i; blocking_side = Activity::Upper; }
        }
      }
      alpha = std::max(alpha, 0.0);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        res.z[i] = (blocking < 0) ? target[a] : res.z[i] + alpha * (target[a] - res.z[i]);
      }
      if (blocking >= 0) {
        res.z[blocking] = blocking_side == Activity::Lower ? lb[blocking] : ub[blocking];
        res.active[blocking] = blocking_side;
        continue;
      }
    }

    // Subspace minimizer is feasible: check multiplier signs of the active set.
    res.gradient = H * res.z + g;
    Eigen::Index release = -1;
    double worst = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lb[i] == ub[i]) continue;
      double violation = 0.0;
      if (res.active[i] == Activity::Lower) violation = -res.gradient[i];
      if (res.active[i] == Activity::Upper) violation = res.gradient[i];
      if (violation > worst) { worst = violation; release = i; }
    }
    if (release < 0) {
      for (Eigen::Index i = 0; i < n; ++i) res.z[i] = std::clamp(res.z[i], lb[i], ub[i]);
      res.gradient = H * res.z + g;
      return res;
    }
    res.active[release] = Activity::Free;
  }
  throw NumericalError("box QP did not converge within the iteration cap");
}

}  // namespace rhec
