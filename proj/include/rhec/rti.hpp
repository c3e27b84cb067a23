#pragma once

// Real-time iteration (RTI) engine for multiple-shooting nonlinear least
// squares:
//
//   min  1/2 sum_t || h_t(x_i, u_j, p) - y_t ||^2_{W_t}
//   s.t. x_{i+1} = F(x_i, u_i, p),  box bounds on x_0, p, u
//
// Each sample performs exactly one Gauss-Newton step, split into
//   prepare  - integrate along the previous solution, evaluate residuals and
//              sensitivities, condense into a dense QP skeleton;
//   feedback - inject the datum that arrives at the sample instant (pinned
//              initial state / parameters and measurement or reference slots),
//              solve one box QP and expand it back through the linearized
//              dynamics.

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

#include "rhec/box_qp.hpp"

namespace rhec {

struct DynamicsEval {
  Eigen::VectorXd next;
  Eigen::MatrixXd A;   ///< nx x nx
  Eigen::MatrixXd Bu;  ///< nx x nu
  Eigen::MatrixXd Bp;  ///< nx x np
};

using DynamicsFn =
    std::function<DynamicsEval(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& p)>;

/// Model part h of a residual and its partial Jacobians.
struct ResidualEval {
  Eigen::VectorXd value;
  Eigen::MatrixXd Jx;
  Eigen::MatrixXd Ju;  ///< empty when the term uses no input
  Eigen::MatrixXd Jp;  ///< empty when the term uses no parameters
};

using ResidualFn = std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& p, ResidualEval& out)>;

/// One least-squares term r = h(x_node, u_input, p) - reference, weighted by
/// `weight` (symmetric PSD). Components flagged in `angular` are wrapped.
struct ResidualTerm {
  int node = 0;
  int input = -1;  ///< interval whose input enters h, or -1
  ResidualFn model;
  Eigen::VectorXd reference;
  Eigen::MatrixXd weight;
  std::vector<bool> angular;
};

/// A reference component that is overwritten by the feedback datum.
struct DatumSlot {
  int term = 0;
  int component = 0;
};

enum class BlockMode { Free, Pinned };

struct ShootingProblem {
  int nx = 0;
  int nu = 0;
  int np = 0;
  int horizon = 0;  ///< number of shooting intervals
  DynamicsFn dynamics;
  std::vector<ResidualTerm> terms;

  BlockMode initial_state = BlockMode::Free;
  BlockMode parameters = BlockMode::Free;
  std::vector<bool> angular_state;  ///< wrapped components of x for pinned differences

  Eigen::VectorXd x0_lb, x0_ub;  ///< used when the initial state is free
  Eigen::VectorXd p_lb, p_ub;    ///< used when the parameters are free
  Eigen::VectorXd u_lb, u_ub;    ///< per interval

  std::vector<DatumSlot> datum_slots;

  /// Datum layout: [x0 if pinned][p if pinned][slot values].
  int datum_size() const;
  /// Number of condensed QP variables: [x0 if free][p if free][u_0..u_{N-1}].
  int condensed_size() const;
  void validate() const;
};

struct HorizonSolution {
  std::vector<Eigen::VectorXd> states;  ///< horizon + 1 nodes
  std::vector<Eigen::VectorXd> inputs;  ///< horizon intervals
  Eigen::VectorXd params;
  Eigen::VectorXd dynamics_multipliers;  ///< horizon * nx, from the last KKT evaluation
  Eigen::VectorXd bound_multipliers;     ///< one per condensed variable
  std::vector<Activity> active_set;      ///< QP warm start
  double kkt = 0.0;
  double prep_us = 0.0;
  double fb_us = 0.0;
  int qp_iterations = 0;
  int gauss_newton_iterations = 0;
};

struct StageLinearization {
  Eigen::VectorXd next;
  Eigen::VectorXd defect;  ///< F(x_i, u_i, p) - x_{i+1}
  Eigen::MatrixXd A, Bu, Bp;
};

struct TermLinearization {
  Eigen::VectorXd model;     ///< h at the linearization point
  Eigen::VectorXd residual;  ///< h - reference, wrapped where angular
  Eigen::MatrixXd Jx, Ju, Jp;
};

struct CondensedQp {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::VectorXd lb, ub;  ///< bounds on the step
};

/// Everything that can be computed before the sample arrives.
struct PreparedIteration {
  const ShootingProblem* problem = nullptr;
  HorizonSolution guess;
  std::vector<StageLinearization> stages;
  std::vector<TermLinearization> terms;

  // Condensed skeleton: dx_i = S_i w + s_i + E_i delta, delta = pinned block shift.
  std::vector<Eigen::MatrixXd> S;
  std::vector<Eigen::VectorXd> s;
  std::vector<Eigen::MatrixXd> E;
  Eigen::MatrixXd H;
  Eigen::VectorXd g0;
  Eigen::MatrixXd G_pinned;  ///< d g / d delta
  Eigen::MatrixXd G_slots;   ///< d g / d (slot residual change)
  Eigen::VectorXd w;         ///< current values of the condensed variables
  Eigen::VectorXd w_lb, w_ub;
  double prep_us = 0.0;
};

/// Forward simulation of `inputs` from `x0` (zero defects).
HorizonSolution rollout(const ShootingProblem& problem, const Eigen::VectorXd& x0, const Eigen::VectorXd& params,
                        const std::vector<Eigen::VectorXd>& inputs);

/// Linearize and condense along `prev`. The problem must outlive the result.
PreparedIteration prepare(const ShootingProblem& problem, const HorizonSolution& prev);

CondensedQp condense(const PreparedIteration& prepped, std::span<const double> datum);

struct FeedbackOptions {
  bool compute_kkt = true;
  BoxQpOptions qp;
};

/// One QP solve on the prepared linearization with the current datum.
HorizonSolution feedback(const PreparedIteration& prepped, std::span<const double> datum,
                         const FeedbackOptions& options = {});

/// Moves every node one slot left and duplicates the last node and input.
HorizonSolution shift(const HorizonSolution& sol);

/// First-order optimality residual at `sol`:
///   ||grad L||_inf + sum |min(z - lb, l+)| + sum |min(ub - z, l-)|
/// plus the infinity norms of the shooting defects and pinned-block mismatch.
/// `datum` (may be empty) overrides the stored references as in feedback.
double kkt_tolerance(const HorizonSolution& sol, const ShootingProblem& problem,
                     std::span<const double> datum = {}, Eigen::VectorXd* multipliers = nullptr);

/// Writes `datum` into the problem's slot references.
void apply_datum(ShootingProblem& problem, std::span<const double> datum);

}  // namespace rhec
