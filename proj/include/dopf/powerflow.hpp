#pragma once

// Exact unbalanced power flow by forward-backward sweep. Used to build the
// current-angle table, to validate dispatches, and as the accuracy oracle for
// the approximate branch-flow model.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "dopf/errors.hpp"
#include "dopf/feeder.hpp"

namespace dopf {

enum class LoadModel { ConstantPower, ConstantImpedance, Cvr };

/// Reactive DG injection per bus and phase, per-unit.
class Dispatch {
 public:
  Dispatch() = default;
  explicit Dispatch(int num_buses) : q_(static_cast<std::size_t>(num_buses), {0.0, 0.0, 0.0}) {}
  static Dispatch zero(const FeederGraph& g) { return Dispatch(g.num_buses()); }

  double operator()(int bus, int p) const { return q_.at(static_cast<std::size_t>(bus))[static_cast<std::size_t>(p)]; }
  double& operator()(int bus, int p) { return q_.at(static_cast<std::size_t>(bus))[static_cast<std::size_t>(p)]; }
  int num_buses() const { return static_cast<int>(q_.size()); }
  bool operator==(const Dispatch&) const = default;

 private:
  std::vector<std::array<double, 3>> q_;
};

struct SweepOptions {
  double slack_v = 1.0;
  int max_sweeps = 200;
  double tol = 1e-9;
  double collapse_v = 0.5;
};

/// Nominal angle of phase p at the substation: 0, -120, +120 degrees.
inline double nominal_phase_angle(int p) {
  constexpr double k = 2.0 * std::numbers::pi / 3.0;
  return p == 0 ? 0.0 : (p == 1 ? -k : k);
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

struct PhasorSolution {
  /// Per bus, per phase complex voltage (zero on absent phases).
  std::vector<std::array<cd, 3>> V;
  /// Per branch, per phase complex current flowing from -> to.
  std::vector<std::array<cd, 3>> I;
  std::array<cd, 3> S_sub{};
  int sweeps = 0;
  double mismatch = 0.0;

  /// Sending-end complex power V_from^p conj(I^p) of one branch phase.
  cd branch_power(const FeederGraph& g, int e, int p) const {
    return V[g.branch(e).from][p] * std::conj(I[e][p]);
  }
};

/// Complex demand of one load phase at voltage V under the given model.
inline cd load_power(const LoadSpec& load, int p, LoadModel model, cd V) {
  const double v2 = std::norm(V);
  const double p0 = load.p0[p], q0 = load.q0[p];
  switch (model) {
    case LoadModel::ConstantPower: return {p0, q0};
    case LoadModel::ConstantImpedance: return cd(p0, q0) * v2;
    case LoadModel::Cvr:
      return {p0 + load.cvr_p[p] * p0 / 2.0 * (v2 - 1.0), q0 + load.cvr_q[p] * q0 / 2.0 * (v2 - 1.0)};
  }
  return {};
}

/// Solves the exact three-phase power flow with full 3x3 impedance drops.
inline PhasorSolution sweep_powerflow(const FeederGraph& g, LoadModel model, const Dispatch& dispatch,
                                      const SweepOptions& opt = {}) {
  if (dispatch.num_buses() != g.num_buses()) throw DimensionMismatch("dispatch does not match the feeder bus count");
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p = 0; p < kNumPhases; ++p)
      if (dispatch(i, p) != 0.0 && !(g.bus(i).dg && g.bus(i).dg->phases.contains(p)))
        throw ModelError("dispatch on bus '" + g.bus(i).id + "' phase " + kPhaseNames[p] + " without a DG");

  const auto order = topological_order(g);
  const int nb = g.num_buses();
  PhasorSolution sol;
  sol.V.assign(static_cast<std::size_t>(nb), {});
  sol.I.assign(static_cast<std::size_t>(g.num_branches()), {});
  for (int i = 0; i < nb; ++i)
    for (int p : g.bus(i).phases.phases()) sol.V[i][p] = std::polar(opt.slack_v, nominal_phase_angle(p));

  std::vector<std::array<cd, 3>> injection(static_cast<std::size_t>(nb));
  auto backward = [&] {
    for (int i = 0; i < nb; ++i) {
      injection[i] = {};
      const Bus& b = g.bus(i);
      if (b.load)
        for (int p : b.load->phases.phases()) injection[i][p] += std::conj(load_power(*b.load, p, model, sol.V[i][p]) / sol.V[i][p]);
      if (b.dg)
        for (int p : b.dg->phases.phases())
          injection[i][p] -= std::conj(cd(b.dg->p_out[p], dispatch(i, p)) / sol.V[i][p]);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int e = *it;
      const Branch& br = g.branch(e);
      std::array<cd, 3> cur{};
      for (int p : br.phases.phases()) cur[p] = injection[br.to][p];
      for (int c : g.child_branches(br.to))
        for (int p : g.branch(c).phases.phases()) cur[p] += sol.I[c][p];
      sol.I[e] = cur;
    }
  };

  double mismatch = 0.0;
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    backward();
    mismatch = 0.0;
    for (int e : order) {
      const Branch& br = g.branch(e);
      for (int p : br.phases.phases()) {
        cd drop = 0.0;
        for (int q : br.phases.phases()) drop += br.z(p, q) * sol.I[e][q];
        const cd v_new = sol.V[br.from][p] - drop;
        mismatch = std::max(mismatch, std::abs(v_new - sol.V[br.to][p]));
        sol.V[br.to][p] = v_new;
        if (std::abs(v_new) < opt.collapse_v)
          throw SweepError(SweepError::Kind::Diverged, sweep, mismatch,
                           "voltage collapse at bus '" + g.bus(br.to).id + "' (|V| = " + std::to_string(std::abs(v_new)) + ")");
      }
    }
    sol.sweeps = sweep;
    if (mismatch < opt.tol) {
      backward();
      sol.mismatch = mismatch;
      for (int e : g.child_branches(g.substation()))
        for (int p : g.branch(e).phases.phases()) sol.S_sub[p] += sol.branch_power(g, e, p);
      return sol;
    }
  }
  throw SweepError(SweepError::Kind::NotConverged, opt.max_sweeps, mismatch,
                   "sweep did not converge after " + std::to_string(opt.max_sweeps) + " sweeps (mismatch " +
                       std::to_string(mismatch) + ")");
}

/// Frozen branch-current angle differences delta^{pq} = arg I^p - arg I^q.
class AngleTable {
 public:
  AngleTable() = default;
  explicit AngleTable(int num_branches) : delta_(static_cast<std::size_t>(num_branches)) {}

  bool has(int branch) const { return branch >= 0 && branch < size() && delta_[branch].has_value(); }
  int size() const { return static_cast<int>(delta_.size()); }

  /// delta^{pq} for p != q; zero for p == q. Antisymmetric by construction.
  double operator()(int branch, int p, int q) const {
    if (p == q) return 0.0;
    const double d = delta_.at(static_cast<std::size_t>(branch)).value()[pair_index(p, q)];
    return p < q ? d : -d;
  }

  void set(int branch, const std::array<double, 3>& pair_deltas) { delta_.at(static_cast<std::size_t>(branch)) = pair_deltas; }
  bool fallback(int branch) const { return fallback_.size() > static_cast<std::size_t>(branch) && fallback_[branch]; }
  void mark_fallback(int branch) {
    if (fallback_.size() < delta_.size()) fallback_.resize(delta_.size(), 0);
    fallback_[branch] = 1;
  }

 private:
  std::vector<std::optional<std::array<double, 3>>> delta_;
  std::vector<char> fallback_;
};

/// Angle table with the nominal 120-degree separations on every branch.
inline AngleTable nominal_angle_table(const FeederGraph& g) {
  AngleTable t(g.num_branches());
  std::array<double, 3> d{};
  for (int p = 0; p < kNumPhases; ++p)
    for (int q = p + 1; q < kNumPhases; ++q) d[pair_index(p, q)] = wrap_angle(nominal_phase_angle(p) - nominal_phase_angle(q));
  for (int e = 0; e < g.num_branches(); ++e) t.set(e, d);
  return t;
}

/// Runs a constant-impedance solve and records the current angle differences.
inline AngleTable extract_angle_table(const FeederGraph& g, const SweepOptions& opt = {}) {
  const PhasorSolution sol = sweep_powerflow(g, LoadModel::ConstantImpedance, Dispatch::zero(g), opt);
  const AngleTable nominal = nominal_angle_table(g);
  AngleTable t(g.num_branches());
  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    bool degenerate = false;
    for (int p : br.phases.phases()) degenerate |= std::abs(sol.I[e][p]) < 1e-10;
    std::array<double, 3> d{};
    for (auto [p, q] : br.phases.pairs())
      d[pair_index(p, q)] = degenerate ? nominal(e, p, q) : wrap_angle(std::arg(sol.I[e][p]) - std::arg(sol.I[e][q]));
    t.set(e, d);
    if (degenerate) t.mark_fallback(e);
  }
  return t;
}

struct Violation {
  enum class Kind { VoltageLow, VoltageHigh, Ampacity };
  Kind kind;
  int index;  // bus index for voltages, branch index for ampacity
  int phase;
  double value;
  double limit;
};

struct ValidationLimits {
  double v_min = 0.95;
  double v_max = 1.05;
  double tol = 1e-4;
};

struct DispatchValidation {
  double substation_power_mw = 0.0;
  /// |V| per bus and phase (zero on absent phases).
  std::vector<std::array<double, 3>> voltages;
  std::vector<Violation> violations;
  PhasorSolution solution;
};

inline double substation_power_mw(const FeederGraph& g, const PhasorSolution& sol) {
  double p = 0.0;
  for (const auto& s : sol.S_sub) p += s.real();
  return p * g.bases().power_va / 1e6;
}

/// Applies a reactive dispatch to the exact model with CVR loads and checks the limits.
inline DispatchValidation validate_dispatch(const FeederGraph& g, const Dispatch& q_dg, const SweepOptions& opt = {},
                                            const ValidationLimits& lim = {}) {
  DispatchValidation out;
  out.solution = sweep_powerflow(g, LoadModel::Cvr, q_dg, opt);
  out.substation_power_mw = substation_power_mw(g, out.solution);
  out.voltages.assign(static_cast<std::size_t>(g.num_buses()), {});
  for (int i = 0; i < g.num_buses(); ++i) {
    for (int p : g.bus(i).phases.phases()) {
      const double vm = std::abs(out.solution.V[i][p]);
      out.voltages[i][p] = vm;
      if (vm < lim.v_min - lim.tol) out.violations.push_back({Violation::Kind::VoltageLow, i, p, vm, lim.v_min});
      if (vm > lim.v_max + lim.tol) out.violations.push_back({Violation::Kind::VoltageHigh, i, p, vm, lim.v_max});
    }
  }
  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    if (!br.ampacity) continue;
    for (int p : br.phases.phases()) {
      const double im = std::abs(out.solution.I[e][p]);
      if (im > *br.ampacity + lim.tol) out.violations.push_back({Violation::Kind::Ampacity, e, p, im, *br.ampacity});
    }
  }
  return out;
}

/// Solution dump: per bus-phase voltage magnitude/angle and per branch-phase complex flow.
inline nlohmann::json solution_to_json(const FeederGraph& g, const PhasorSolution& sol) {
  using nlohmann::json;
  json buses = json::array();
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p : g.bus(i).phases.phases())
      buses.push_back({{"bus", g.bus(i).id},
                       {"phase", std::string(1, kPhaseNames[p])},
                       {"v_mag_pu", std::abs(sol.V[i][p])},
                       {"v_ang_deg", std::arg(sol.V[i][p]) * 180.0 / std::numbers::pi}});
  json branches = json::array();
  for (int e = 0; e < g.num_branches(); ++e) {
    const Branch& br = g.branch(e);
    for (int p : br.phases.phases()) {
      const cd s = sol.branch_power(g, e, p);
      branches.push_back({{"from", g.bus(br.from).id},
                          {"to", g.bus(br.to).id},
                          {"phase", std::string(1, kPhaseNames[p])},
                          {"p_pu", s.real()},
                          {"q_pu", s.imag()},
                          {"i_mag_pu", std::abs(sol.I[e][p])},
                          {"i_ang_deg", std::arg(sol.I[e][p]) * 180.0 / std::numbers::pi}});
    }
  }
  json sub = json::array();
  for (int p : g.bus(g.substation()).phases.phases())
    sub.push_back({{"phase", std::string(1, kPhaseNames[p])}, {"p_pu", sol.S_sub[p].real()}, {"q_pu", sol.S_sub[p].imag()}});
  return {{"power_base_va", g.bases().power_va}, {"sweeps", sol.sweeps}, {"buses", buses}, {"branches", branches}, {"substation", sub}};
}

/// Largest deviation (radians) of bus-voltage phase separations from 120 degrees.
inline double max_voltage_angle_deviation(const FeederGraph& g, const PhasorSolution& sol) {
  double worst = 0.0;
  for (int i = 0; i < g.num_buses(); ++i)
    for (auto [p, q] : g.bus(i).phases.pairs()) {
      const double sep = wrap_angle(std::arg(sol.V[i][p]) - std::arg(sol.V[i][q]));
      const double nominal = wrap_angle(nominal_phase_angle(p) - nominal_phase_angle(q));
      worst = std::max(worst, std::abs(wrap_angle(sep - nominal)));
    }
  return worst;
}

}  // namespace dopf
