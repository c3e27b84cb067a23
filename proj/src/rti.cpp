#include "rhec/rti.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "rhec/error.hpp"
#include "rhec/model.hpp"

namespace rhec {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

struct Layout {
  int x0 = -1;  // offset of free x0 block
  int p = -1;   // offset of free parameter block
  int u = 0;    // offset of the first input
  int nw = 0;
  int pin_x = 0;  // size of pinned x0 block
  int pin_p = 0;  // size of pinned parameter block
  int npin = 0;

  explicit Layout(const ShootingProblem& pr) {
    int off = 0;
    if (pr.initial_state == BlockMode::Free) {
      x0 = off;
      off += pr.nx;
    } else {
      pin_x = pr.nx;
    }
    if (pr.np > 0) {
      if (pr.parameters == BlockMode::Free) {
        p = off;
        off += pr.np;
      } else {
        pin_p = pr.np;
      }
    }
    u = off;
    nw = off + pr.horizon * pr.nu;
    npin = pin_x + pin_p;
  }
};

double wrap_if(bool angular, double v) { return angular ? wrap_angle(v) : v; }

bool is_angular(const std::vector<bool>& mask, Eigen::Index i) {
  return static_cast<std::size_t>(i) < mask.size() && mask[static_cast<std::size_t>(i)];
}

std::vector<Eigen::VectorXd> effective_references(const ShootingProblem& pr, std::span<const double> datum) {
  std::vector<Eigen::VectorXd> refs;
  refs.reserve(pr.terms.size());
  for (const auto& t : pr.terms) refs.push_back(t.reference);
  if (!datum.empty()) {
    const Layout lay(pr);
    for (std::size_t k = 0; k < pr.datum_slots.size(); ++k) {
      const auto& slot = pr.datum_slots[k];
      refs[static_cast<std::size_t>(slot.term)][slot.component] = datum[static_cast<std::size_t>(lay.npin) + k];
    }
  }
  return refs;
}

void check_solution(const ShootingProblem& pr, const HorizonSolution& sol) {
  if (static_cast<int>(sol.states.size()) != pr.horizon + 1 || static_cast<int>(sol.inputs.size()) != pr.horizon ||
      sol.params.size() != pr.np)
    throw InvalidArgument("horizon solution does not match the problem dimensions");
  for (const auto& x : sol.states)
    if (x.size() != pr.nx) throw InvalidArgument("state dimension mismatch");
  for (const auto& u : sol.inputs)
    if (u.size() != pr.nu) throw InvalidArgument("input dimension mismatch");
}

const Eigen::VectorXd& empty_vec() {
  static const Eigen::VectorXd e(0);
  return e;
}

TermLinearization linearize_term(const ShootingProblem& pr, const ResidualTerm& term, const Eigen::VectorXd& ref,
                                 const HorizonSolution& sol) {
  const Eigen::VectorXd& u = term.input >= 0 ? sol.inputs[static_cast<std::size_t>(term.input)] : empty_vec();
  ResidualEval ev;
  term.model(sol.states[static_cast<std::size_t>(term.node)], u, sol.params, ev);
  TermLinearization tl;
  tl.model = ev.value;
  tl.residual = ev.value - ref;
  for (Eigen::Index c = 0; c < tl.residual.size(); ++c) tl.residual[c] = wrap_if(is_angular(term.angular, c), tl.residual[c]);
  if (!tl.residual.allFinite()) throw NumericalError("residual is not finite");
  tl.Jx = ev.Jx;
  tl.Ju = ev.Ju.size() ? ev.Ju : Eigen::MatrixXd::Zero(tl.residual.size(), term.input >= 0 ? pr.nu : 0);
  tl.Jp = ev.Jp.size() ? ev.Jp : Eigen::MatrixXd::Zero(tl.residual.size(), pr.np);
  return tl;
}

void linearize(const ShootingProblem& pr, const HorizonSolution& sol, const std::vector<Eigen::VectorXd>& refs,
               std::vector<StageLinearization>& stages, std::vector<TermLinearization>& terms) {
  stages.resize(static_cast<std::size_t>(pr.horizon));
  for (int i = 0; i < pr.horizon; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    DynamicsEval ev = pr.dynamics(sol.states[ii], sol.inputs[ii], sol.params);
    if (!ev.next.allFinite()) throw NumericalError("shooting integration failed");
    auto& st = stages[ii];
    st.defect = ev.next - sol.states[ii + 1];
    st.next = std::move(ev.next);
    st.A = std::move(ev.A);
    st.Bu = std::move(ev.Bu);
    st.Bp = ev.Bp.size() ? std::move(ev.Bp) : Eigen::MatrixXd::Zero(pr.nx, pr.np);
  }
  terms.resize(pr.terms.size());
  for (std::size_t t = 0; t < pr.terms.size(); ++t) terms[t] = linearize_term(pr, pr.terms[t], refs[t], sol);
}

struct DatumShift {
  Eigen::VectorXd pinned;  // delta of the pinned block
  Eigen::VectorXd slots;   // change of each slot residual component
};

DatumShift datum_shift(const PreparedIteration& pp, std::span<const double> datum) {
  const ShootingProblem& pr = *pp.problem;
  if (static_cast<int>(datum.size()) != pr.datum_size())
    throw InvalidArgument("datum size " + std::to_string(datum.size()) + " does not match the problem (" +
                          std::to_string(pr.datum_size()) + ")");
  const Layout lay(pr);
  DatumShift d;
  d.pinned.resize(lay.npin);
  for (int k = 0; k < lay.pin_x; ++k) {
    const double v = datum[static_cast<std::size_t>(k)];
    if (!std::isfinite(v)) throw NumericalError("datum is not finite");
    d.pinned[k] = wrap_if(is_angular(pr.angular_state, k), v - pp.guess.states[0][k]);
  }
  for (int k = 0; k < lay.pin_p; ++k) {
    const double v = datum[static_cast<std::size_t>(lay.pin_x + k)];
    if (!std::isfinite(v)) throw NumericalError("datum is not finite");
    d.pinned[lay.pin_x + k] = v - pp.guess.params[k];
  }
  d.slots.resize(static_cast<Eigen::Index>(pr.datum_slots.size()));
  for (std::size_t k = 0; k < pr.datum_slots.size(); ++k) {
    const auto& slot = pr.datum_slots[k];
    const auto& tl = pp.terms[static_cast<std::size_t>(slot.term)];
    const double v = datum[static_cast<std::size_t>(lay.npin) + k];
    if (!std::isfinite(v)) throw NumericalError("datum is not finite");
    const bool ang = is_angular(pr.terms[static_cast<std::size_t>(slot.term)].angular, slot.component);
    d.slots[static_cast<Eigen::Index>(k)] = wrap_if(ang, tl.model[slot.component] - v) - tl.residual[slot.component];
  }
  return d;
}

}  // namespace

int ShootingProblem::datum_size() const {
  const Layout lay(*this);
  return lay.npin + static_cast<int>(datum_slots.size());
}

int ShootingProblem::condensed_size() const { return Layout(*this).nw; }

void ShootingProblem::validate() const {
  if (nx <= 0 || nu < 0 || np < 0 || horizon < 1) throw InvalidArgument("invalid shooting problem dimensions");
  if (!dynamics) throw InvalidArgument("shooting problem has no dynamics");
  auto check_bounds = [](const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, int n, const char* what) {
    if (lb.size() != n || ub.size() != n) throw InvalidArgument(std::string("bound size mismatch for ") + what);
    for (int i = 0; i < n; ++i)
      if (!(lb[i] <= ub[i])) throw InvalidArgument(std::string("inconsistent bounds for ") + what);
  };
  if (initial_state == BlockMode::Free) check_bounds(x0_lb, x0_ub, nx, "initial state");
  if (np > 0 && parameters == BlockMode::Free) check_bounds(p_lb, p_ub, np, "parameters");
  check_bounds(u_lb, u_ub, nu, "inputs");
  for (const auto& t : terms) {
    if (t.node < 0 || t.node > horizon) throw InvalidArgument("residual term node out of range");
    if (t.input >= horizon) throw InvalidArgument("residual term input out of range");
    if (!t.model) throw InvalidArgument("residual term has no model");
    const auto r = t.reference.size();
    if (t.weight.rows() != r || t.weight.cols() != r) throw InvalidArgument("residual weight size mismatch");
  }
  for (const auto& s : datum_slots) {
    if (s.term < 0 || s.term >= static_cast<int>(terms.size())) throw InvalidArgument("datum slot term out of range");
    if (s.component < 0 || s.component >= terms[static_cast<std::size_t>(s.term)].reference.size())
      throw InvalidArgument("datum slot component out of range");
  }
}

HorizonSolution rollout(const ShootingProblem& problem, const Eigen::VectorXd& x0, const Eigen::VectorXd& params,
                        const std::vector<Eigen::VectorXd>& inputs) {
  if (static_cast<int>(inputs.size()) != problem.horizon) throw InvalidArgument("rollout input count mismatch");
  HorizonSolution sol;
  sol.params = params;
  sol.inputs = inputs;
  sol.states.reserve(inputs.size() + 1);
  sol.states.push_back(x0);
  for (const auto& u : inputs) sol.states.push_back(problem.dynamics(sol.states.back(), u, params).next);
  return sol;
}

PreparedIteration prepare(const ShootingProblem& pr, const HorizonSolution& prev) {
  const auto start = Clock::now();
  check_solution(pr, prev);
  const Layout lay(pr);
  const int N = pr.horizon;

  PreparedIteration pp;
  pp.problem = &pr;
  pp.guess = prev;
  linearize(pr, prev, effective_references(pr, {}), pp.stages, pp.terms);

  // Propagate affine dependence of each node on the condensed variables.
  pp.S.assign(static_cast<std::size_t>(N + 1), Eigen::MatrixXd::Zero(pr.nx, lay.nw));
  pp.s.assign(static_cast<std::size_t>(N + 1), Eigen::VectorXd::Zero(pr.nx));
  pp.E.assign(static_cast<std::size_t>(N + 1), Eigen::MatrixXd::Zero(pr.nx, lay.npin));
  if (lay.x0 >= 0) pp.S[0].middleCols(lay.x0, pr.nx).setIdentity();
  if (lay.pin_x > 0) pp.E[0].leftCols(lay.pin_x).setIdentity();
  for (int i = 0; i < N; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const auto& st = pp.stages[ii];
    pp.S[ii + 1].noalias() = st.A * pp.S[ii];
    if (pr.nu > 0) pp.S[ii + 1].middleCols(lay.u + i * pr.nu, pr.nu) += st.Bu;
    if (lay.p >= 0) pp.S[ii + 1].middleCols(lay.p, pr.np) += st.Bp;
    pp.s[ii + 1].noalias() = st.A * pp.s[ii] + st.defect;
    pp.E[ii + 1].noalias() = st.A * pp.E[ii];
    if (lay.pin_p > 0) pp.E[ii + 1].middleCols(lay.pin_x, pr.np) += st.Bp;
  }

  pp.H = Eigen::MatrixXd::Zero(lay.nw, lay.nw);
  pp.g0 = Eigen::VectorXd::Zero(lay.nw);
  pp.G_pinned = Eigen::MatrixXd::Zero(lay.nw, lay.npin);
  pp.G_slots = Eigen::MatrixXd::Zero(lay.nw, static_cast<Eigen::Index>(pr.datum_slots.size()));

  std::vector<std::vector<std::pair<Eigen::Index, int>>> slots_of(pr.terms.size());
  for (std::size_t k = 0; k < pr.datum_slots.size(); ++k)
    slots_of[static_cast<std::size_t>(pr.datum_slots[k].term)].emplace_back(static_cast<Eigen::Index>(k),
                                                                            pr.datum_slots[k].component);

  for (std::size_t t = 0; t < pr.terms.size(); ++t) {
    const auto& term = pr.terms[t];
    const auto& tl = pp.terms[t];
    const auto node = static_cast<std::size_t>(term.node);
    Eigen::MatrixXd C = tl.Jx * pp.S[node];
    if (term.input >= 0 && pr.nu > 0) C.middleCols(lay.u + term.input * pr.nu, pr.nu) += tl.Ju;
    if (lay.p >= 0) C.middleCols(lay.p, pr.np) += tl.Jp;
    Eigen::MatrixXd D = tl.Jx * pp.E[node];
    if (lay.pin_p > 0) D.middleCols(lay.pin_x, pr.np) += tl.Jp;
    const Eigen::VectorXd a0 = tl.residual + tl.Jx * pp.s[node];

    const Eigen::MatrixXd CtW = C.transpose() * term.weight;
    pp.H.noalias() += CtW * C;
    pp.g0.noalias() += CtW * a0;
    if (lay.npin > 0) pp.G_pinned.noalias() += CtW * D;
    for (const auto& [k, c] : slots_of[t]) pp.G_slots.col(k) += CtW.col(c);
  }
  pp.H = 0.5 * (pp.H + pp.H.transpose());

  pp.w.resize(lay.nw);
  pp.w_lb.resize(lay.nw);
  pp.w_ub.resize(lay.nw);
  if (lay.x0 >= 0) {
    pp.w.segment(lay.x0, pr.nx) = prev.states[0];
    pp.w_lb.segment(lay.x0, pr.nx) = pr.x0_lb;
    pp.w_ub.segment(lay.x0, pr.nx) = pr.x0_ub;
  }
  if (lay.p >= 0) {
    pp.w.segment(lay.p, pr.np) = prev.params;
    pp.w_lb.segment(lay.p, pr.np) = pr.p_lb;
    pp.w_ub.segment(lay.p, pr.np) = pr.p_ub;
  }
  for (int i = 0; i < N; ++i) {
    pp.w.segment(lay.u + i * pr.nu, pr.nu) = prev.inputs[static_cast<std::size_t>(i)];
    pp.w_lb.segment(lay.u + i * pr.nu, pr.nu) = pr.u_lb;
    pp.w_ub.segment(lay.u + i * pr.nu, pr.nu) = pr.u_ub;
  }
  pp.prep_us = elapsed_us(start);
  return pp;
}

CondensedQp condense(const PreparedIteration& pp, std::span<const double> datum) {
  const DatumShift d = datum_shift(pp, datum);
  CondensedQp qp;
  qp.H = pp.H;
  qp.g = pp.g0;
  if (d.pinned.size()) qp.g.noalias() += pp.G_pinned * d.pinned;
  if (d.slots.size()) qp.g.noalias() += pp.G_slots * d.slots;
  qp.lb = pp.w_lb - pp.w;
  qp.ub = pp.w_ub - pp.w;
  return qp;
}

HorizonSolution feedback(const PreparedIteration& pp, std::span<const double> datum, const FeedbackOptions& options) {
  const auto start = Clock::now();
  const ShootingProblem& pr = *pp.problem;
  const Layout lay(pr);
  const DatumShift d = datum_shift(pp, datum);

  Eigen::VectorXd g = pp.g0;
  if (d.pinned.size()) g.noalias() += pp.G_pinned * d.pinned;
  if (d.slots.size()) g.noalias() += pp.G_slots * d.slots;
  const Eigen::VectorXd lb = pp.w_lb - pp.w;
  const Eigen::VectorXd ub = pp.w_ub - pp.w;
  const bool warm = static_cast<int>(pp.guess.active_set.size()) == lay.nw;
  const BoxQpResult qp = solve_box_qp(pp.H, g, lb, ub, warm ? &pp.guess.active_set : nullptr, options.qp);

  HorizonSolution sol = pp.guess;
  for (int i = 0; i <= pr.horizon; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    Eigen::VectorXd dx = pp.S[ii] * qp.z + pp.s[ii];
    if (lay.npin > 0) dx.noalias() += pp.E[ii] * d.pinned;
    sol.states[ii] += dx;
  }
  for (int i = 0; i < pr.horizon; ++i) sol.inputs[static_cast<std::size_t>(i)] += qp.z.segment(lay.u + i * pr.nu, pr.nu);
  if (lay.p >= 0) sol.params += qp.z.segment(lay.p, pr.np);
  if (lay.pin_p > 0) sol.params += d.pinned.segment(lay.pin_x, pr.np);

  // Bounds hold exactly on the expanded iterate.
  for (int i = 0; i < pr.horizon; ++i) {
    auto& u = sol.inputs[static_cast<std::size_t>(i)];
    for (int k = 0; k < pr.nu; ++k) u[k] = std::clamp(u[k], pr.u_lb[k], pr.u_ub[k]);
  }
  if (lay.p >= 0)
    for (int k = 0; k < pr.np; ++k) sol.params[k] = std::clamp(sol.params[k], pr.p_lb[k], pr.p_ub[k]);
  if (lay.x0 >= 0)
    for (int k = 0; k < pr.nx; ++k) sol.states[0][k] = std::clamp(sol.states[0][k], pr.x0_lb[k], pr.x0_ub[k]);

  for (const auto& x : sol.states)
    if (!x.allFinite()) throw NumericalError("feedback step produced a non-finite iterate");

  sol.active_set = qp.active;
  sol.bound_multipliers = qp.gradient;
  sol.qp_iterations = qp.iterations;
  sol.gauss_newton_iterations = 1;
  sol.prep_us = pp.prep_us;
  sol.fb_us = elapsed_us(start);
  if (options.compute_kkt) sol.kkt = kkt_tolerance(sol, pr, datum, &sol.dynamics_multipliers);
  return sol;
}

HorizonSolution shift(const HorizonSolution& sol) {
  HorizonSolution out = sol;
  const std::size_t N = sol.inputs.size();
  if (N == 0) return out;
  for (std::size_t i = 0; i + 1 < sol.states.size(); ++i) out.states[i] = sol.states[i + 1];
  for (std::size_t i = 0; i + 1 < N; ++i) out.inputs[i] = sol.inputs[i + 1];

  const auto nu = static_cast<std::size_t>(sol.inputs[0].size());
  const std::size_t tail = N * nu;
  if (sol.active_set.size() >= tail && nu > 0) {
    const std::size_t head = sol.active_set.size() - tail;
    for (std::size_t k = head; k + nu < sol.active_set.size(); ++k) out.active_set[k] = sol.active_set[k + nu];
  }
  const Eigen::Index nx = sol.states.empty() ? 0 : sol.states[0].size();
  if (sol.dynamics_multipliers.size() == static_cast<Eigen::Index>(N) * nx && N > 1) {
    out.dynamics_multipliers.head((static_cast<Eigen::Index>(N) - 1) * nx) =
        sol.dynamics_multipliers.tail((static_cast<Eigen::Index>(N) - 1) * nx);
  }
  return out;
}

double kkt_tolerance(const HorizonSolution& sol, const ShootingProblem& pr, std::span<const double> datum,
                     Eigen::VectorXd* multipliers) {
  check_solution(pr, sol);
  if (!datum.empty() && static_cast<int>(datum.size()) != pr.datum_size())
    throw InvalidArgument("datum size does not match the problem");
  const Layout lay(pr);
  const int N = pr.horizon;
  std::vector<StageLinearization> stages;
  std::vector<TermLinearization> terms;
  linearize(pr, sol, effective_references(pr, datum), stages, terms);

  std::vector<Eigen::VectorXd> gx(static_cast<std::size_t>(N + 1), Eigen::VectorXd::Zero(pr.nx));
  std::vector<Eigen::VectorXd> gu(static_cast<std::size_t>(N), Eigen::VectorXd::Zero(pr.nu));
  Eigen::VectorXd gp = Eigen::VectorXd::Zero(pr.np);
  for (std::size_t t = 0; t < pr.terms.size(); ++t) {
    const auto& term = pr.terms[t];
    const Eigen::VectorXd Wr = term.weight * terms[t].residual;
    gx[static_cast<std::size_t>(term.node)].noalias() += terms[t].Jx.transpose() * Wr;
    if (term.input >= 0 && pr.nu > 0) gu[static_cast<std::size_t>(term.input)].noalias() += terms[t].Ju.transpose() * Wr;
    if (pr.np > 0) gp.noalias() += terms[t].Jp.transpose() * Wr;
  }

  // Dynamics multipliers from stationarity w.r.t. x_1..x_N.
  std::vector<Eigen::VectorXd> lambda(static_cast<std::size_t>(N));
  lambda[static_cast<std::size_t>(N - 1)] = gx[static_cast<std::size_t>(N)];
  for (int i = N - 2; i >= 0; --i) {
    const auto ii = static_cast<std::size_t>(i);
    lambda[ii] = gx[ii + 1] + stages[ii + 1].A.transpose() * lambda[ii + 1];
  }
  if (multipliers) {
    multipliers->resize(static_cast<Eigen::Index>(N) * pr.nx);
    for (int i = 0; i < N; ++i) multipliers->segment(i * pr.nx, pr.nx) = lambda[static_cast<std::size_t>(i)];
  }

  double stationarity = 0.0;
  double complementarity = 0.0;
  auto accumulate = [&](double grad, double z, double lb, double ub) {
    const double lp = std::isfinite(lb) ? std::max(grad, 0.0) : 0.0;
    const double lm = std::isfinite(ub) ? std::max(-grad, 0.0) : 0.0;
    stationarity = std::max(stationarity, std::abs(grad - lp + lm));
    if (std::isfinite(lb)) complementarity += std::abs(std::min(z - lb, lp));
    if (std::isfinite(ub)) complementarity += std::abs(std::min(ub - z, lm));
  };

  for (int i = 0; i < N; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const Eigen::VectorXd r = gu[ii] + stages[ii].Bu.transpose() * lambda[ii];
    for (int k = 0; k < pr.nu; ++k) accumulate(r[k], sol.inputs[ii][k], pr.u_lb[k], pr.u_ub[k]);
  }
  if (lay.p >= 0) {
    Eigen::VectorXd r = gp;
    for (int i = 0; i < N; ++i) r.noalias() += stages[static_cast<std::size_t>(i)].Bp.transpose() * lambda[static_cast<std::size_t>(i)];
    for (int k = 0; k < pr.np; ++k) accumulate(r[k], sol.params[k], pr.p_lb[k], pr.p_ub[k]);
  }
  if (lay.x0 >= 0) {
    const Eigen::VectorXd r = gx[0] + stages[0].A.transpose() * lambda[0];
    for (int k = 0; k < pr.nx; ++k) accumulate(r[k], sol.states[0][k], pr.x0_lb[k], pr.x0_ub[k]);
  }

  double infeasibility = 0.0;
  for (const auto& st : stages) infeasibility = std::max(infeasibility, st.defect.cwiseAbs().maxCoeff());
  if (!datum.empty()) {
    for (int k = 0; k < lay.pin_x; ++k) {
      const double diff = wrap_if(is_angular(pr.angular_state, k), datum[static_cast<std::size_t>(k)] - sol.states[0][k]);
      infeasibility = std::max(infeasibility, std::abs(diff));
    }
    for (int k = 0; k < lay.pin_p; ++k)
      infeasibility = std::max(infeasibility, std::abs(datum[static_cast<std::size_t>(lay.pin_x + k)] - sol.params[k]));
  }
  return stationarity + complementarity + infeasibility;
}

void apply_datum(ShootingProblem& pr, std::span<const double> datum) {
  if (static_cast<int>(datum.size()) != pr.datum_size()) throw InvalidArgument("datum size does not match the problem");
  const Layout lay(pr);
  for (std::size_t k = 0; k < pr.datum_slots.size(); ++k) {
    const auto& slot = pr.datum_slots[k];
    pr.terms[static_cast<std::size_t>(slot.term)].reference[slot.component] = datum[static_cast<std::size_t>(lay.npin) + k];
  }
}

}  // namespace rhec
