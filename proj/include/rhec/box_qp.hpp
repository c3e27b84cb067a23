#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace rhec {

/// Bound activity of one QP variable.
enum class Activity : std::int8_t { Lower = -1, Free = 0, Upper = 1 };

struct BoxQpOptions {
  int max_iterations = 0;          ///< 0 selects 5 n + 20
  double regularization = 1e-8;    ///< added to the diagonal when H is near-singular
  double singular_ratio = 1e-12;   ///< pivot ratio that counts as near-singular
};

struct BoxQpResult {
  Eigen::VectorXd z;
  /// Gradient H z + g; on active bounds it is the bound multiplier
  /// (>= 0 at a lower bound, <= 0 at an upper bound).
  Eigen::VectorXd gradient;
  std::vector<Activity> active;
  int iterations = 0;
  bool regularized = false;
};

/// Primal active-set solver for
///   min 1/2 z'Hz + g'z  s.t.  lb <= z <= ub
/// with H symmetric positive semi-definite. `warm_start` (optional) seeds the
/// active set, typically from the previous sample. Throws InvalidArgument on
/// dimension or bound mismatch and NumericalError when the iteration cap is hit.
BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lb,
                         const Eigen::VectorXd& ub, const std::vector<Activity>* warm_start = nullptr,
                         const BoxQpOptions& options = {});

}  // namespace rhec
