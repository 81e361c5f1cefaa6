#pragma once

// Penalty successive linear programming on the approximate branch-flow OPF.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "dopf/bfm.hpp"
#include "dopf/conic.hpp"

namespace dopf {

/// terms . x == rhs, first-order model of one quadratic equality.
struct LinearizedRow {
  int branch;
  std::vector<Term> terms;
  double rhs;
};

struct Linearization {
  std::vector<LinearizedRow> rows;
  /// Branches whose |S0| was raised to the regularization floor.
  std::vector<int> regularized;
};

inline constexpr double kMinApparentPower = 1e-6;
inline constexpr double kMinVoltage = 1e-9;

/// First-order rows at x0:
///   l^pp = 2(P0 P + Q0 Q)/v0 - S0^2 v / v0^2
///   l^pq = 1/2 [ (S0q/S0p) sqrt(v0p/v0q) l^pp + (S0p/S0q) sqrt(v0q/v0p) l^qq ]
inline Linearization linearize_quadratics(const ConstraintSystem& sys, const OperatingPoint& x0) {
  const Eigen::VectorXd& x = x0.x;
  const double vs = sys.layout->slack_v2;
  Linearization out;
  std::vector<int> flagged(sys.rows.empty() ? 0 : static_cast<std::size_t>(sys.rows.back().branch + 1), 0);
  auto v_of = [&](int idx) { return idx >= 0 ? x[idx] : vs; };

  for (const auto& d : sys.pp) {
    const double P0 = x[d.P], Q0 = x[d.Q], v0 = v_of(d.v);
    if (!(v0 > kMinVoltage)) throw DegenerateLinearization(d.branch, "squared voltage below 1e-9 at branch " + std::to_string(d.branch));
    const double S2 = P0 * P0 + Q0 * Q0;
    LinearizedRow r{d.branch, {{d.l, 1.0}, {d.P, -2.0 * P0 / v0}, {d.Q, -2.0 * Q0 / v0}}, 0.0};
    const double cv = S2 / (v0 * v0);
    if (d.v >= 0) r.terms.push_back({d.v, cv});
    else r.rhs -= cv * vs;
    out.rows.push_back(std::move(r));
  }
  // S0 and from-bus v0 per branch phase for the cross-phase rows.
  auto pp_of = [&](int e, int p) -> const PpQuad& {
    for (const auto& d : sys.pp)
      if (d.branch == e && d.phase == p) return d;
    throw ModelError("missing quadratic descriptor");
  };
  for (const auto& d : sys.pq) {
    const PpQuad& a = pp_of(d.branch, d.p);
    const PpQuad& b = pp_of(d.branch, d.q);
    double Sp = std::hypot(x[a.P], x[a.Q]);
    double Sq = std::hypot(x[b.P], x[b.Q]);
    const double vp = v_of(a.v), vq = v_of(b.v);
    if (!(vp > kMinVoltage) || !(vq > kMinVoltage))
      throw DegenerateLinearization(d.branch, "squared voltage below 1e-9 at branch " + std::to_string(d.branch));
    if (Sp < kMinApparentPower || Sq < kMinApparentPower) {
      Sp = std::max(Sp, kMinApparentPower);
      Sq = std::max(Sq, kMinApparentPower);
      if (static_cast<std::size_t>(d.branch) >= flagged.size()) flagged.resize(static_cast<std::size_t>(d.branch) + 1, 0);
      flagged[d.branch] = 1;
    }
    const double cp = 0.5 * (Sq / Sp) * std::sqrt(vp / vq);
    const double cq = 0.5 * (Sp / Sq) * std::sqrt(vq / vp);
    out.rows.push_back({d.branch, {{d.lpq, 1.0}, {d.lpp, -cp}, {d.lqq, -cq}}, 0.0});
  }
  for (std::size_t e = 0; e < flagged.size(); ++e)
    if (flagged[e]) out.regularized.push_back(static_cast<int>(e));
  return out;
}

/// Penalty LP over (dx, m, n):
///   min  grad f . dx + W sum(m + n)
///   s.t. a . (x + dx) + m - n = b    for every linear and linearized row
///        max(-s, lo - x) <= dx <= min(s, hi - x),  m, n >= 0
/// Variables 0..N-1 are dx; elastic pairs follow row by row.
inline conic::ConicProgram build_pslp_lp(const ConstraintSystem& sys, const OperatingPoint& xk, const Linearization& lin,
                                         double s, double W) {
  const Eigen::VectorXd& x = xk.x;
  const int n = sys.num_variables();
  conic::ConicProgram lp;
  for (int j = 0; j < n; ++j) {
    const double lo = std::max(-s, sys.lo[j] - x[j]);
    const double hi = std::min(s, sys.hi[j] - x[j]);
    lp.add_variable("d" + sys.layout->names[j], std::min(lo, 0.0), std::max(hi, 0.0));
  }
  for (const auto& t : sys.objective) lp.add_objective(t.var, t.coeff);
  lp.set_objective_constant(sys.objective_pu(x));
  auto add_row = [&](const std::vector<Term>& terms, double rhs, const std::string& name) {
    double ax = 0.0;
    for (const auto& t : terms) ax += t.coeff * x[t.var];
    const int m = lp.add_variable("m_" + name, 0.0);
    const int nn = lp.add_variable("n_" + name, 0.0);
    lp.set_objective(m, W);
    lp.set_objective(nn, W);
    std::vector<Term> row = terms;
    row.push_back({m, 1.0});
    row.push_back({nn, -1.0});
    lp.add_equality(std::move(row), rhs - ax, name);
  };
  for (std::size_t r = 0; r < sys.rows.size(); ++r) add_row(sys.rows[r].terms, sys.rows[r].rhs, "r" + std::to_string(r));
  for (std::size_t r = 0; r < lin.rows.size(); ++r) add_row(lin.rows[r].terms, lin.rows[r].rhs, "q" + std::to_string(r));
  return lp;
}

enum class StepRule { Verbatim, Inverted };
enum class PslpMode { Penalty, PlainSlp };

struct PslpSettings {
  double tol = 1e-4;
  double s0 = 0.01;
  double penalty = 1e4;
  int max_iters = 50;
  StepRule step_rule = StepRule::Verbatim;
  PslpMode mode = PslpMode::Penalty;
  double s_floor = 1e-8;
  int floor_patience = 5;
  /// Largest linear-row or quadratic residual accepted at convergence.
  double feas_tol = 1e-4;
  InitMode init = InitMode::Optimize;
  conic::SolverSettings lp;
};

struct PslpIteration {
  int iter = 0;
  double objective_mw = 0.0;
  double epsilon = 0.0;
  double step_bound = 0.0;
  double elastic_mass = 0.0;
  double max_quad_residual = 0.0;
  double max_linear_residual = 0.0;
  conic::SolveStatus lp_status = conic::SolveStatus::Optimal;
  std::vector<int> regularized;
};

struct PslpResult {
  bool converged = false;
  std::string message;
  OperatingPoint point;
  Dispatch dispatch;
  double objective_mw = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
  std::vector<PslpIteration> trace;
};

inline PslpResult run_pslp(const ConstraintSystem& sys, OperatingPoint x, const PslpSettings& set = {}) {
  if (!(set.tol > 0) || !(set.s0 > 0) || !(set.penalty > 0)) throw ModelError("PSLP settings require tol, s0 and penalty > 0");
  const auto t0 = std::chrono::steady_clock::now();
  PslpResult res;
  clip_to_bounds(sys, x.x);
  const int n = sys.num_variables();
  double s = set.s0;
  double f_prev = sys.objective_pu(x.x);
  int floored = 0;

  auto finish = [&](bool ok, std::string msg) {
    res.converged = ok;
    res.message = std::move(msg);
    res.point = x;
    res.dispatch = extract_dispatch(x);
    res.objective_mw = sys.objective_mw(x.x);
    res.iterations = static_cast<int>(res.trace.size());
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };

  for (int k = 1; k <= set.max_iters; ++k) {
    const Linearization lin = linearize_quadratics(sys, x);
    const conic::ConicProgram lp = build_pslp_lp(sys, x, lin, s, set.penalty);
    const conic::SolveReport rep = conic::solve(lp, set.lp);
    PslpIteration it;
    it.iter = k;
    it.step_bound = s;
    it.lp_status = rep.status;
    it.regularized = lin.regularized;
    if (rep.status != conic::SolveStatus::Optimal) {
      res.trace.push_back(it);
      throw SolverError(std::string("PSLP LP at iteration ") + std::to_string(k) + ": " + conic::to_string(rep.status));
    }
    const Eigen::VectorXd& sol = *rep.primal;
    x.x += sol.head(n);
    clip_to_bounds(sys, x.x);
    for (int j = n; j < sol.size(); ++j) it.elastic_mass += std::max(sol[j], 0.0);
    const Residuals r = residuals(sys, x);
    const double f = sys.objective_pu(x.x);
    const double eps = f_prev - f;
    f_prev = f;
    it.objective_mw = sys.to_mw(f);
    it.epsilon = sys.to_mw(eps);
    it.max_quad_residual = r.quad_max;
    it.max_linear_residual = r.linear_max;
    res.trace.push_back(it);

    if (std::abs(eps) < set.tol && r.linear_max < set.feas_tol && r.quad_max < set.feas_tol)
      return finish(true, "converged");

    if (set.mode == PslpMode::Penalty) {
      const bool shrink = set.step_rule == StepRule::Verbatim ? eps > 0 : eps <= 0;
      s = shrink ? s / 2.0 : s * 2.0;
      if (s <= set.s_floor) {
        s = set.s_floor;
        floored = std::abs(eps) > set.tol ? floored + 1 : 0;
        if (floored >= set.floor_patience) return finish(false, "step bound stuck at its floor");
      } else {
        floored = 0;
      }
    }
  }
  return finish(false, "iteration limit reached");
}

/// Builds the model from the feeder and runs from the LinDistFlow start.
inline PslpResult run_pslp(const FeederGraph& g, const PslpSettings& set = {}, const ModelOptions& opt = {}) {
  SweepOptions sw;
  sw.slack_v = opt.slack_v;
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g, sw), opt);
  return run_pslp(sys, lindistflow_solve(sys, set.init, set.lp), set);
}

inline void write_pslp_trace_csv(const PslpResult& r, std::ostream& os) {
  os.precision(12);
  os << "iter,objective_MW,epsilon,step_bound,elastic_mass,max_quad_residual\n";
  for (const auto& t : r.trace)
    os << t.iter << "," << t.objective_mw << "," << t.epsilon << "," << t.step_bound << "," << t.elastic_mass << ","
       << t.max_quad_residual << "\n";
}

}  // namespace dopf
