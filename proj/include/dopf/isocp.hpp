#pragma once

// Iterative SOCP: rotated-cone relaxation of the quadratic equalities plus
// linear directional rows that contract the feasibility gap each iterate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dopf/bfm.hpp"
#include "dopf/conic.hpp"
#include "dopf/powerflow.hpp"

namespace dopf {

/// e_pp = P^2 + Q^2 - v l^pp, e_pq = (l^pq)^2 - l^pp l^qq.
struct GapVector {
  Eigen::VectorXd e_pp;
  Eigen::VectorXd e_pq;
  double eps = 0.0;

  double max_e_pp() const { return e_pp.size() ? e_pp.maxCoeff() : 0.0; }
  double max_e_pq() const { return e_pq.size() ? e_pq.maxCoeff() : 0.0; }
};

inline GapVector compute_gap(const ConstraintSystem& sys, const OperatingPoint& x) {
  GapVector g;
  g.e_pp.resize(static_cast<Eigen::Index>(sys.pp.size()));
  g.e_pq.resize(static_cast<Eigen::Index>(sys.pq.size()));
  for (std::size_t k = 0; k < sys.pp.size(); ++k) g.e_pp[k] = sys.pp_residual(sys.pp[k], x.x);
  for (std::size_t k = 0; k < sys.pq.size(); ++k) g.e_pq[k] = sys.pq_residual(sys.pq[k], x.x);
  g.eps = std::max(g.e_pp.size() ? g.e_pp.cwiseAbs().maxCoeff() : 0.0, g.e_pq.size() ? g.e_pq.cwiseAbs().maxCoeff() : 0.0);
  return g;
}

/// grad e(x_k) . dx >= (gamma - 1) e_k
struct DirectionalRow {
  int branch;
  std::vector<Term> terms;
  double lo;
};

/// Rows for every quadratic whose |e_k| is at least `omit_below`.
inline std::vector<DirectionalRow> directional_rows(const ConstraintSystem& sys, const OperatingPoint& xk,
                                                    const GapVector& gap, double gamma, double omit_below = 0.0) {
  const Eigen::VectorXd& x = xk.x;
  std::vector<DirectionalRow> rows;
  for (std::size_t k = 0; k < sys.pp.size(); ++k) {
    const double e = gap.e_pp[k];
    if (std::abs(e) < omit_below) continue;
    const PpQuad& d = sys.pp[k];
    const double v = d.v >= 0 ? x[d.v] : sys.layout->slack_v2;
    DirectionalRow r{d.branch, {{d.P, 2.0 * x[d.P]}, {d.Q, 2.0 * x[d.Q]}, {d.l, -v}}, (gamma - 1.0) * e};
    if (d.v >= 0) r.terms.push_back({d.v, -x[d.l]});
    rows.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < sys.pq.size(); ++k) {
    const double e = gap.e_pq[k];
    if (std::abs(e) < omit_below) continue;
    const PqQuad& d = sys.pq[k];
    rows.push_back({d.branch, {{d.lpq, 2.0 * x[d.lpq]}, {d.lpp, -x[d.lqq]}, {d.lqq, -x[d.lpp]}}, (gamma - 1.0) * e});
  }
  return rows;
}

/// SOCP over dx with every constraint imposed at x_k + alpha dx.
inline conic::ConicProgram build_isocp(const ConstraintSystem& sys, const OperatingPoint& xk,
                                       const std::vector<DirectionalRow>& rows, double alpha) {
  const Eigen::VectorXd& x = xk.x;
  const int n = sys.num_variables();
  conic::ConicProgram prog;
  for (int j = 0; j < n; ++j) {
    const double lo = (sys.lo[j] - x[j]) / alpha;
    const double hi = (sys.hi[j] - x[j]) / alpha;
    prog.add_variable("d" + sys.layout->names[j], std::min(lo, 0.0), std::max(hi, 0.0));
  }
  for (const auto& t : sys.objective) prog.add_objective(t.var, alpha * t.coeff);
  prog.set_objective_constant(sys.objective_pu(x));
  for (std::size_t r = 0; r < sys.rows.size(); ++r) {
    const LinearRow& row = sys.rows[r];
    std::vector<Term> terms;
    for (const auto& t : row.terms) terms.push_back({t.var, alpha * t.coeff});
    prog.add_equality(std::move(terms), row.rhs - row.eval(x), "r" + std::to_string(r));
  }
  auto aff = [&](int var) {
    return var >= 0 ? conic::AffineTerm::variable(var, alpha, x[var]) : conic::AffineTerm::constant(sys.layout->slack_v2);
  };
  for (const auto& d : sys.pp) prog.add_cone({aff(d.v), aff(d.l), {aff(d.P), aff(d.Q)}, "pp"});
  for (const auto& d : sys.pq) prog.add_cone({aff(d.lpp), aff(d.lqq), {aff(d.lpq)}, "pq"});
  for (const auto& r : rows) {
    std::vector<Term> terms;
    for (const auto& t : r.terms) terms.push_back({t.var, alpha * t.coeff});
    prog.add_row(std::move(terms), r.lo, conic::kInf, "dir");
  }
  return prog;
}

struct IsocpSettings {
  double tol = 1e-4;
  double gamma = 0.9;
  double alpha = 1.0;
  int max_iters = 100;
  /// Linear-row residual accepted at convergence.
  double feas_tol = 1e-6;
  /// Relative slack of the per-iterate lower-bound check.
  double sandwich_tol = 1e-6;
  InitMode init = InitMode::Optimize;
  conic::SolverSettings socp;
};

struct BoundReport {
  double f_socp = 0.0;
  double f_sys = 0.0;
  bool sandwich_ok = false;
};

struct IsocpIteration {
  int iter = 0;
  BoundReport bounds;
  double eps = 0.0;
  double max_e_pp = 0.0;
  double max_e_pq = 0.0;
  int directional_rows = 0;
  conic::SolveStatus status = conic::SolveStatus::Optimal;
  double solve_time = 0.0;
};

struct IsocpResult {
  bool converged = false;
  std::string message;
  /// Iteration whose SOCP failed, 0 if none.
  int failed_iteration = 0;
  OperatingPoint point;
  Dispatch dispatch;
  double objective_mw = 0.0;
  double initial_eps = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
  std::vector<IsocpIteration> trace;
};

/// `g` is used only to evaluate f_sys through the sweep oracle.
inline IsocpResult run_isocp(const FeederGraph& g, const ConstraintSystem& sys, OperatingPoint x,
                             const IsocpSettings& set = {}, const SweepOptions& sweep = {}) {
  if (!(set.gamma > 0 && set.gamma < 1)) throw ModelError("gamma must lie in (0, 1)");
  if (!(set.alpha > 0 && set.alpha <= 1)) throw ModelError("alpha must lie in (0, 1]");
  if (!(set.tol > 0)) throw ModelError("tol must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  IsocpResult res;
  clip_to_bounds(sys, x.x);
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

  GapVector gap = compute_gap(sys, x);
  res.initial_eps = gap.eps;
  if (gap.eps < set.tol && residuals(sys, x).linear_max < set.feas_tol) return finish(true, "converged");

  for (int k = 1; k <= set.max_iters; ++k) {
    const auto rows = directional_rows(sys, x, gap, set.gamma, set.tol / 10.0);
    const conic::ConicProgram prog = build_isocp(sys, x, rows, set.alpha);
    const conic::SolveReport rep = conic::solve(prog, set.socp);
    IsocpIteration it;
    it.iter = k;
    it.directional_rows = static_cast<int>(rows.size());
    it.status = rep.status;
    it.solve_time = rep.solve_time;
    if (rep.status != conic::SolveStatus::Optimal) {
      res.trace.push_back(it);
      res.failed_iteration = k;
      return finish(false, std::string("SOCP ") + conic::to_string(rep.status) + " at iteration " + std::to_string(k));
    }
    x.x += set.alpha * *rep.primal;
    gap = compute_gap(sys, x);
    it.eps = gap.eps;
    it.max_e_pp = gap.max_e_pp();
    it.max_e_pq = gap.max_e_pq();
    it.bounds.f_socp = sys.objective_mw(x.x);
    try {
      SweepOptions so = sweep;
      it.bounds.f_sys = validate_dispatch(g, extract_dispatch(x), so).substation_power_mw;
    } catch (const SweepError&) {
      it.bounds.f_sys = std::numeric_limits<double>::quiet_NaN();
    }
    it.bounds.sandwich_ok = it.bounds.f_socp <= it.bounds.f_sys + set.sandwich_tol * std::abs(it.bounds.f_sys);
    res.trace.push_back(it);
    if (gap.eps < set.tol && residuals(sys, x).linear_max < set.feas_tol) return finish(true, "converged");
  }
  return finish(false, "iteration limit reached");
}

inline IsocpResult run_isocp(const FeederGraph& g, const IsocpSettings& set = {}, const ModelOptions& opt = {}) {
  SweepOptions sw;
  sw.slack_v = opt.slack_v;
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g, sw), opt);
  return run_isocp(g, sys, lindistflow_solve(sys, set.init, set.socp), set, sw);
}

inline void write_isocp_trace_csv(const IsocpResult& r, std::ostream& os) {
  os.precision(12);
  os << "iter,f_socp_MW,f_sys_MW,eps,max_e_pp,max_e_pq,socp_status,solve_time_s\n";
  for (const auto& t : r.trace)
    os << t.iter << "," << t.bounds.f_socp << "," << t.bounds.f_sys << "," << t.eps << "," << t.max_e_pp << ","
       << t.max_e_pq << "," << conic::to_string(t.status) << "," << t.solve_time << "\n";
}

inline nlohmann::json isocp_gap_trace_json(const IsocpResult& r) {
  nlohmann::json j;
  j["initial_eps"] = r.initial_eps;
  j["iterations"] = nlohmann::json::array();
  for (const auto& t : r.trace)
    j["iterations"].push_back({{"iter", t.iter},
                               {"eps", t.eps},
                               {"max_e_pp", t.max_e_pp},
                               {"max_e_pq", t.max_e_pq},
                               {"f_socp_MW", t.bounds.f_socp},
                               {"f_sys_MW", t.bounds.f_sys},
                               {"sandwich_ok", t.bounds.sandwich_ok}});
  return j;
}

}  // namespace dopf
