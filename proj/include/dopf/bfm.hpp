#pragma once

// Linear-quadratic approximate branch-flow model with frozen current angles,
// the CVR-OPF constraint set built on it, and the LinDistFlow initializer.
//
// Variable vector x_OPF, in this order:
//   per branch (input order): P^p, Q^p, l^pp over branch phases, then l^pq over phase pairs
//   per non-substation bus:   v^p over bus phases
//   per DG bus:               q_dg^p over DG phases
// The substation v is the constant slack_v^2 and never a variable.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "dopf/conic.hpp"
#include "dopf/errors.hpp"
#include "dopf/feeder.hpp"
#include "dopf/powerflow.hpp"

namespace dopf {

using conic::Term;

struct VariableLayout {
  std::vector<std::array<int, 3>> P, Q, lpp;
  /// Indexed by pair_index.
  std::vector<std::array<int, 3>> lpq;
  std::vector<std::array<int, 3>> v;
  std::vector<std::array<int, 3>> qdg;
  std::vector<std::string> names;
  double slack_v2 = 1.0;

  int size() const { return static_cast<int>(names.size()); }
};

inline std::string branch_label(const FeederGraph& g, int e) {
  return g.bus(g.branch(e).from).id + "-" + g.bus(g.branch(e).to).id;
}

inline std::shared_ptr<const VariableLayout> make_layout(const FeederGraph& g, double slack_v = 1.0) {
  auto L = std::make_shared<VariableLayout>();
  constexpr std::array<int, 3> none{-1, -1, -1};
  const auto ne = static_cast<std::size_t>(g.num_branches());
  const auto nb = static_cast<std::size_t>(g.num_buses());
  L->P.assign(ne, none);
  L->Q.assign(ne, none);
  L->lpp.assign(ne, none);
  L->lpq.assign(ne, none);
  L->v.assign(nb, none);
  L->qdg.assign(nb, none);
  L->slack_v2 = slack_v * slack_v;
  auto add = [&](std::string name) {
    L->names.push_back(std::move(name));
    return L->size() - 1;
  };
  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    const std::string tag = "[" + branch_label(g, e) + "].";
    for (int p : br.phases.phases()) L->P[e][p] = add("P" + tag + kPhaseNames[p]);
    for (int p : br.phases.phases()) L->Q[e][p] = add("Q" + tag + kPhaseNames[p]);
    for (int p : br.phases.phases()) L->lpp[e][p] = add("l" + tag + kPhaseNames[p]);
    for (auto [p, q] : br.phases.pairs())
      L->lpq[e][pair_index(p, q)] = add("l" + tag + kPhaseNames[p] + kPhaseNames[q]);
  }
  for (int i = 0; i < g.num_buses(); ++i) {
    const Bus& b = g.bus(i);
    if (b.is_substation) continue;
    for (int p : b.phases.phases()) L->v[i][p] = add("v[" + b.id + "]." + kPhaseNames[p]);
  }
  for (int i = 0; i < g.num_buses(); ++i) {
    const Bus& b = g.bus(i);
    if (!b.dg) continue;
    for (int p : b.dg->phases.phases()) L->qdg[i][p] = add("q[" + b.id + "]." + kPhaseNames[p]);
  }
  return L;
}

/// A point in x_OPF coordinates.
struct OperatingPoint {
  std::shared_ptr<const VariableLayout> layout;
  Eigen::VectorXd x;

  /// Squared voltage magnitude, including the constant substation value.
  double v(int bus, int p) const {
    const int k = layout->v[bus][p];
    return k >= 0 ? x[k] : layout->slack_v2;
  }
};

/// p_L = a_p + b_p v, q_L = a_q + b_q v per bus phase.
struct LoadModelCoefficients {
  std::vector<std::array<double, 3>> a_p, b_p, a_q, b_q;

  static LoadModelCoefficients from_graph(const FeederGraph& g) {
    LoadModelCoefficients c;
    const auto nb = static_cast<std::size_t>(g.num_buses());
    c.a_p.assign(nb, {});
    c.b_p.assign(nb, {});
    c.a_q.assign(nb, {});
    c.b_q.assign(nb, {});
    for (int i = 0; i < g.num_buses(); ++i) {
      const auto& load = g.bus(i).load;
      if (!load) continue;
      for (int p : load->phases.phases()) {
        c.b_p[i][p] = load->cvr_p[p] * load->p0[p] / 2.0;
        c.a_p[i][p] = load->p0[p] - c.b_p[i][p];
        c.b_q[i][p] = load->cvr_q[p] * load->q0[p] / 2.0;
        c.a_q[i][p] = load->q0[p] - c.b_q[i][p];
      }
    }
    return c;
  }

  double p(int bus, int ph, double v) const { return a_p[bus][ph] + b_p[bus][ph] * v; }
  double q(int bus, int ph, double v) const { return a_q[bus][ph] + b_q[bus][ph] * v; }
};

enum class RowKind { ActiveBalance, ReactiveBalance, VoltageDrop };

inline const char* to_string(RowKind k) {
  switch (k) {
    case RowKind::ActiveBalance: return "active";
    case RowKind::ReactiveBalance: return "reactive";
    case RowKind::VoltageDrop: return "drop";
  }
  return "?";
}

/// terms . x == rhs
struct LinearRow {
  RowKind kind;
  int branch;
  int phase;
  std::vector<Term> terms;
  double rhs;

  double eval(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.coeff * x[t.var];
    return s;
  }
};

/// P^2 + Q^2 - v_from l^pp; v_from < 0 means the constant slack value.
struct PpQuad {
  int branch, phase;
  int P, Q, l, v;
};

/// (l^pq)^2 - l^pp l^qq.
struct PqQuad {
  int branch, p, q;
  int lpq, lpp, lqq;
};

struct ModelOptions {
  double v_min = 0.95;
  double v_max = 1.05;
  double slack_v = 1.0;
  /// Upper box on l^pp when a branch has no ampacity.
  double l_cap = 1e3;
};

struct ConstraintSystem {
  std::shared_ptr<const VariableLayout> layout;
  std::vector<LinearRow> rows;
  std::vector<PpQuad> pp;
  std::vector<PqQuad> pq;
  Eigen::VectorXd lo, hi;
  std::vector<Term> objective;
  LoadModelCoefficients loads;
  double power_base_va = 1e6;

  int num_variables() const { return layout->size(); }
  double objective_pu(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (const auto& t : objective) s += t.coeff * x[t.var];
    return s;
  }
  double to_mw(double pu) const { return pu * power_base_va / 1e6; }
  double objective_mw(const Eigen::VectorXd& x) const { return to_mw(objective_pu(x)); }

  double pp_residual(const PpQuad& d, const Eigen::VectorXd& x) const {
    const double v = d.v >= 0 ? x[d.v] : layout->slack_v2;
    return x[d.P] * x[d.P] + x[d.Q] * x[d.Q] - v * x[d.l];
  }
  double pq_residual(const PqQuad& d, const Eigen::VectorXd& x) const {
    return x[d.lpq] * x[d.lpq] - x[d.lpp] * x[d.lqq];
  }
};

/// Coefficient Re/Im(z e^{-j delta}) pieces for the loss terms of the balance rows.
inline cd loss_coefficient(cd z, double delta) { return z * std::polar(1.0, -delta); }

inline ConstraintSystem build_constraints(const FeederGraph& g, const AngleTable& angles, const ModelOptions& opt = {}) {
  if (angles.size() != g.num_branches()) throw DimensionMismatch("angle table does not match the feeder branch count");
  ConstraintSystem sys;
  sys.layout = make_layout(g, opt.slack_v);
  const VariableLayout& L = *sys.layout;
  sys.loads = LoadModelCoefficients::from_graph(g);
  sys.power_base_va = g.bases().power_va;
  const int n = L.size();
  sys.lo = Eigen::VectorXd::Constant(n, -conic::kInf);
  sys.hi = Eigen::VectorXd::Constant(n, conic::kInf);

  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    if (br.phases.size() > 1 && !angles.has(e))
      throw ModelError("angle table has no entry for branch " + branch_label(g, e));
  }
  for (int i = 0; i < g.num_buses(); ++i) {
    const auto& dg = g.bus(i).dg;
    if (!dg) continue;
    for (int p : dg->phases.phases())
      if (dg->p_out[p] > dg->s_rated[p]) throw ModelError("DG at bus '" + g.bus(i).id + "' has p_out above its rating");
  }

  auto v_term = [&](int bus, int p, double coeff, std::vector<Term>& terms, double& rhs) {
    const int k = L.v[bus][p];
    if (k >= 0) terms.push_back({k, coeff});
    else rhs -= coeff * L.slack_v2;
  };
  auto l_index = [&](int e, int p, int q) { return p == q ? L.lpp[e][p] : L.lpq[e][pair_index(p, q)]; };

  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    const int j = br.to;
    const Bus& bj = g.bus(j);
    const auto ph = br.phases.phases();
    for (int p : ph) {
      LinearRow act{RowKind::ActiveBalance, e, p, {}, 0.0};
      LinearRow rea{RowKind::ReactiveBalance, e, p, {}, 0.0};
      act.terms.push_back({L.P[e][p], 1.0});
      rea.terms.push_back({L.Q[e][p], 1.0});
      for (int q : ph) {
        const double delta = p == q ? 0.0 : angles(e, p, q);
        const cd c = loss_coefficient(br.z(p, q), delta);
        act.terms.push_back({l_index(e, p, q), -c.real()});
        rea.terms.push_back({l_index(e, p, q), -c.imag()});
      }
      for (int k : g.child_branches(j)) {
        if (!g.branch(k).phases.contains(p)) continue;
        act.terms.push_back({L.P[k][p], -1.0});
        rea.terms.push_back({L.Q[k][p], -1.0});
      }
      if (bj.load && bj.load->phases.contains(p)) {
        act.rhs += sys.loads.a_p[j][p];
        rea.rhs += sys.loads.a_q[j][p];
        v_term(j, p, -sys.loads.b_p[j][p], act.terms, act.rhs);
        v_term(j, p, -sys.loads.b_q[j][p], rea.terms, rea.rhs);
      }
      if (bj.dg && bj.dg->phases.contains(p)) {
        act.rhs -= bj.dg->p_out[p];
        rea.terms.push_back({L.qdg[j][p], 1.0});
      }
      sys.rows.push_back(std::move(act));
      sys.rows.push_back(std::move(rea));
    }
    for (int p : ph) {
      // v_i - v_j - 2 sum_q [Re(c) P^q - Im(c) Q^q] + sum_q |z^pq|^2 l^qq
      //   + sum_{q1<q2} 2 Re(z^{pq1} conj(z^{pq2}) e^{j delta^{q1q2}}) l^{q1q2} = 0
      LinearRow drop{RowKind::VoltageDrop, e, p, {}, 0.0};
      v_term(br.from, p, 1.0, drop.terms, drop.rhs);
      v_term(j, p, -1.0, drop.terms, drop.rhs);
      for (int q : ph) {
        const cd a = std::polar(1.0, nominal_phase_angle(p) - nominal_phase_angle(q));
        const cd c = a * std::conj(br.z(p, q));
        drop.terms.push_back({L.P[e][q], -2.0 * c.real()});
        drop.terms.push_back({L.Q[e][q], 2.0 * c.imag()});
        drop.terms.push_back({L.lpp[e][q], std::norm(br.z(p, q))});
      }
      for (auto [q1, q2] : br.phases.pairs()) {
        const cd k = br.z(p, q1) * std::conj(br.z(p, q2)) * std::polar(1.0, angles(e, q1, q2));
        drop.terms.push_back({L.lpq[e][pair_index(q1, q2)], 2.0 * k.real()});
      }
      sys.rows.push_back(std::move(drop));
    }
    for (int p : ph) sys.pp.push_back({e, p, L.P[e][p], L.Q[e][p], L.lpp[e][p], L.v[br.from][p]});
    for (auto [p, q] : br.phases.pairs())
      sys.pq.push_back({e, p, q, L.lpq[e][pair_index(p, q)], L.lpp[e][p], L.lpp[e][q]});

    const double l_hi = br.ampacity ? (*br.ampacity) * (*br.ampacity) : opt.l_cap;
    for (int p : ph) {
      sys.lo[L.lpp[e][p]] = 0.0;
      sys.hi[L.lpp[e][p]] = l_hi;
    }
    for (auto [p, q] : br.phases.pairs()) {
      sys.lo[L.lpq[e][pair_index(p, q)]] = 0.0;
      sys.hi[L.lpq[e][pair_index(p, q)]] = l_hi;
    }
  }
  for (int i = 0; i < g.num_buses(); ++i) {
    for (int p = 0; p < kNumPhases; ++p) {
      if (L.v[i][p] >= 0) {
        sys.lo[L.v[i][p]] = opt.v_min * opt.v_min;
        sys.hi[L.v[i][p]] = opt.v_max * opt.v_max;
      }
      if (L.qdg[i][p] >= 0) {
        const double lim = g.bus(i).dg->q_limit(p);
        sys.lo[L.qdg[i][p]] = -lim;
        sys.hi[L.qdg[i][p]] = lim;
      }
    }
  }
  for (int e : g.child_branches(g.substation()))
    for (int p : g.branch(e).phases.phases()) sys.objective.push_back({L.P[e][p], 1.0});
  return sys;
}

struct Residuals {
  Eigen::VectorXd linear;
  Eigen::VectorXd quad_pp;
  Eigen::VectorXd quad_pq;
  double linear_max = 0.0;
  double quad_max = 0.0;
};

inline Residuals residuals(const ConstraintSystem& sys, const OperatingPoint& x) {
  if (x.x.size() != sys.num_variables()) throw DimensionMismatch("operating point does not match the constraint system");
  Residuals r;
  r.linear.resize(static_cast<Eigen::Index>(sys.rows.size()));
  for (std::size_t k = 0; k < sys.rows.size(); ++k) r.linear[k] = sys.rows[k].eval(x.x) - sys.rows[k].rhs;
  r.quad_pp.resize(static_cast<Eigen::Index>(sys.pp.size()));
  for (std::size_t k = 0; k < sys.pp.size(); ++k) r.quad_pp[k] = sys.pp_residual(sys.pp[k], x.x);
  r.quad_pq.resize(static_cast<Eigen::Index>(sys.pq.size()));
  for (std::size_t k = 0; k < sys.pq.size(); ++k) r.quad_pq[k] = sys.pq_residual(sys.pq[k], x.x);
  r.linear_max = r.linear.size() ? r.linear.lpNorm<Eigen::Infinity>() : 0.0;
  r.quad_max = std::max(r.quad_pp.size() ? r.quad_pp.lpNorm<Eigen::Infinity>() : 0.0,
                        r.quad_pq.size() ? r.quad_pq.lpNorm<Eigen::Infinity>() : 0.0);
  return r;
}

/// Sets l^pp = (P^2 + Q^2) / v_from and l^pq = sqrt(l^pp l^qq) so both quadratic families hold.
inline void backfill_currents(const ConstraintSystem& sys, Eigen::VectorXd& x) {
  for (const auto& d : sys.pp) {
    const double v = d.v >= 0 ? x[d.v] : sys.layout->slack_v2;
    x[d.l] = (x[d.P] * x[d.P] + x[d.Q] * x[d.Q]) / v;
  }
  for (const auto& d : sys.pq) x[d.lpq] = std::sqrt(x[d.lpp] * x[d.lqq]);
}

inline void clip_to_bounds(const ConstraintSystem& sys, Eigen::VectorXd& x) {
  x = x.cwiseMax(sys.lo).cwiseMin(sys.hi);
}

namespace detail {

/// Square system in (P, Q, v) with l and q_dg moved to the right-hand side.
class FlowSolver {
 public:
  explicit FlowSolver(const ConstraintSystem& sys) : sys_(sys) {
    const VariableLayout& L = *sys.layout;
    col_.assign(static_cast<std::size_t>(L.size()), -1);
    int n = 0;
    auto mark = [&](const std::vector<std::array<int, 3>>& family) {
      for (const auto& a : family)
        for (int k : a)
          if (k >= 0) col_[k] = n++;
    };
    mark(L.P);
    mark(L.Q);
    mark(L.v);
    if (n != static_cast<int>(sys.rows.size())) throw ModelError("flow equations are not square");
    std::vector<Eigen::Triplet<double>> t;
    for (int r = 0; r < n; ++r)
      for (const auto& term : sys.rows[r].terms)
        if (col_[term.var] >= 0) t.emplace_back(r, col_[term.var], term.coeff);
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    lu_.compute(A);
    if (lu_.info() != Eigen::Success) throw ModelError("flow equations are singular");
  }

  /// Solves for P, Q, v in place, holding every other entry of x fixed.
  void solve(Eigen::VectorXd& x) const {
    const int n = static_cast<int>(sys_.rows.size());
    Eigen::VectorXd rhs(n);
    for (int r = 0; r < n; ++r) {
      double b = sys_.rows[r].rhs;
      for (const auto& term : sys_.rows[r].terms)
        if (col_[term.var] < 0) b -= term.coeff * x[term.var];
      rhs[r] = b;
    }
    const Eigen::VectorXd y = lu_.solve(rhs);
    for (int k = 0; k < static_cast<int>(col_.size()); ++k)
      if (col_[k] >= 0) x[k] = y[col_[k]];
  }

 private:
  const ConstraintSystem& sys_;
  std::vector<int> col_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

}  // namespace detail

inline Eigen::VectorXd dispatch_vector(const ConstraintSystem& sys, const Dispatch& d) {
  const VariableLayout& L = *sys.layout;
  if (d.num_buses() != static_cast<int>(L.qdg.size())) throw DimensionMismatch("dispatch does not match the feeder");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size());
  for (int i = 0; i < d.num_buses(); ++i)
    for (int p = 0; p < kNumPhases; ++p) {
      if (L.qdg[i][p] >= 0) x[L.qdg[i][p]] = d(i, p);
      else if (d(i, p) != 0.0) throw ModelError("dispatch on a phase without a DG");
    }
  return x;
}

inline Dispatch extract_dispatch(const OperatingPoint& pt) {
  const VariableLayout& L = *pt.layout;
  Dispatch d(static_cast<int>(L.qdg.size()));
  for (int i = 0; i < d.num_buses(); ++i)
    for (int p = 0; p < kNumPhases; ++p)
      if (L.qdg[i][p] >= 0) d(i, p) = pt.x[L.qdg[i][p]];
  return d;
}

enum class InitMode { Optimize, Zero };

inline const char* to_string(InitMode m) { return m == InitMode::Optimize ? "optimize" : "zero"; }

/// Lossless linear model (all l terms zero) with back-filled currents.
/// Optimize: q_dg chosen by the substation-power LP under the boxes. Zero: q_dg = 0.
inline OperatingPoint lindistflow_solve(const ConstraintSystem& sys, InitMode mode = InitMode::Optimize,
                                        const conic::SolverSettings& settings = {}) {
  const VariableLayout& L = *sys.layout;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size());
  if (mode == InitMode::Zero) {
    detail::FlowSolver(sys).solve(x);
  } else {
    conic::ConicProgram lp;
    for (int k = 0; k < L.size(); ++k) lp.add_variable(L.names[k], sys.lo[k], sys.hi[k]);
    auto zero_l = [&](const std::vector<std::array<int, 3>>& family) {
      for (const auto& a : family)
        for (int k : a)
          if (k >= 0) lp.set_bounds(k, 0.0, 0.0);
    };
    zero_l(L.lpp);
    zero_l(L.lpq);
    for (const auto& r : sys.rows) lp.add_equality(r.terms, r.rhs);
    for (const auto& t : sys.objective) lp.add_objective(t.var, t.coeff);
    conic::SolverSettings s = settings;
    if (s.backend == conic::Backend::InteriorPoint) s.feastol = s.abstol = s.reltol = 1e-10;
    const auto rep = conic::solve(lp, s);
    if (rep.status == conic::SolveStatus::Infeasible)
      throw InfeasibleInitialization("lossless model cannot meet the voltage limits");
    if (rep.status != conic::SolveStatus::Optimal)
      throw SolverError(std::string("lossless initializer LP failed: ") + conic::to_string(rep.status));
    x = *rep.primal;
    // Polish: re-solve the square system at the LP dispatch so the rows hold to machine precision.
    for (const auto& family : {L.lpp, L.lpq})
      for (const auto& a : family)
        for (int k : a)
          if (k >= 0) x[k] = 0.0;
    detail::FlowSolver(sys).solve(x);
  }
  backfill_currents(sys, x);
  return {sys.layout, x};
}

/// Solves the approximate model as a power flow at a fixed dispatch by fixed-point
/// iteration on the currents.
inline OperatingPoint solve_approx_powerflow(const ConstraintSystem& sys, const Dispatch& dispatch, int max_iters = 200,
                                             double tol = 1e-13) {
  Eigen::VectorXd x = dispatch_vector(sys, dispatch);
  const detail::FlowSolver solver(sys);
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd prev = x;
    solver.solve(x);
    backfill_currents(sys, x);
    if ((x - prev).lpNorm<Eigen::Infinity>() < tol) return {sys.layout, x};
  }
  throw SweepError(SweepError::Kind::NotConverged, max_iters, 0.0, "approximate power flow did not converge");
}

/// Maps exact phasors into x_OPF coordinates: v = |V|^2, l = |I|^2, P + jQ = V conj(I).
inline OperatingPoint map_phasor_solution(const FeederGraph& g, const ConstraintSystem& sys, const PhasorSolution& sol,
                                          const Dispatch& dispatch) {
  const VariableLayout& L = *sys.layout;
  Eigen::VectorXd x = dispatch_vector(sys, dispatch);
  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    for (int p : br.phases.phases()) {
      const cd s = sol.branch_power(g, e, p);
      x[L.P[e][p]] = s.real();
      x[L.Q[e][p]] = s.imag();
      x[L.lpp[e][p]] = std::norm(sol.I[e][p]);
    }
    for (auto [p, q] : br.phases.pairs()) x[L.lpq[e][pair_index(p, q)]] = std::abs(sol.I[e][p]) * std::abs(sol.I[e][q]);
  }
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p = 0; p < kNumPhases; ++p)
      if (L.v[i][p] >= 0) x[L.v[i][p]] = std::norm(sol.V[i][p]);
  return {sys.layout, x};
}

struct ApproximationErrorReport {
  /// Largest | |S_approx| - |S_exact| | / |S_exact| over branch phases, in percent.
  double max_flow_error_pct = 0.0;
  /// Largest | sqrt(v) - |V| | over bus phases, per-unit.
  double max_voltage_error = 0.0;
  int worst_branch = -1;
  int worst_bus = -1;
};

inline ApproximationErrorReport approximation_error_report(const FeederGraph& g, const OperatingPoint& approx,
                                                           const PhasorSolution& exact, double min_flow = 1e-6) {
  const VariableLayout& L = *approx.layout;
  ApproximationErrorReport rep;
  for (int e = 0; e < g.num_branches(); ++e)
    for (int p : g.branch(e).phases.phases()) {
      const double s_exact = std::abs(exact.branch_power(g, e, p));
      if (s_exact < min_flow) continue;
      const double s_approx = std::hypot(approx.x[L.P[e][p]], approx.x[L.Q[e][p]]);
      const double err = 100.0 * std::abs(s_approx - s_exact) / s_exact;
      if (err > rep.max_flow_error_pct) {
        rep.max_flow_error_pct = err;
        rep.worst_branch = e;
      }
    }
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p : g.bus(i).phases.phases()) {
      const double err = std::abs(std::sqrt(approx.v(i, p)) - std::abs(exact.V[i][p]));
      if (err > rep.max_voltage_error) {
        rep.max_voltage_error = err;
        rep.worst_bus = i;
      }
    }
  return rep;
}

/// Human-readable row listing for fixture diffing.
inline void dump(const ConstraintSystem& sys, std::ostream& os) {
  const VariableLayout& L = *sys.layout;
  os.precision(12);
  os << "# variables " << L.size() << "\n";
  for (int k = 0; k < L.size(); ++k) os << L.names[k] << " in [" << sys.lo[k] << ", " << sys.hi[k] << "]\n";
  os << "# objective\nmin";
  for (const auto& t : sys.objective) os << " " << std::showpos << t.coeff << std::noshowpos << " " << L.names[t.var];
  os << "\n# linear rows " << sys.rows.size() << "\n";
  for (std::size_t r = 0; r < sys.rows.size(); ++r) {
    const auto& row = sys.rows[r];
    os << r << " " << to_string(row.kind) << " b" << row.branch << "." << kPhaseNames[row.phase] << ":";
    for (const auto& t : row.terms) os << " " << std::showpos << t.coeff << std::noshowpos << " " << L.names[t.var];
    os << " = " << row.rhs << "\n";
  }
  os << "# quadratic rows " << sys.pp.size() + sys.pq.size() << "\n";
  for (const auto& d : sys.pp)
    os << L.names[d.P] << "^2 + " << L.names[d.Q] << "^2 = " << (d.v >= 0 ? L.names[d.v] : std::to_string(L.slack_v2)) << " * "
       << L.names[d.l] << "\n";
  for (const auto& d : sys.pq) os << L.names[d.lpq] << "^2 = " << L.names[d.lpp] << " * " << L.names[d.lqq] << "\n";
}

}  // namespace dopf
