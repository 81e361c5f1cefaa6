// Acceptance gate. Prints one line per criterion and exits non-zero if any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dopf/dopf.hpp"

using namespace dopf;

namespace {

const std::vector<std::string> kFixtures = {"4bus.feeder", "4bus_dg.feeder", "balanced3.feeder", "ieee13.feeder",
                                            "ieee13_dg.feeder"};

std::string fixture_path(const std::string& name) { return std::string(DOPF_DATA_DIR) + "/feeders/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Model {
  FeederGraph g;
  ConstraintSystem sys;
};

Model model(const FeederGraph& g) { return {g, build_constraints(g, extract_angle_table(g))}; }

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::vector<std::string> notes;

  void fail(std::string s) {
    kind = Fail;
    notes.push_back(std::move(s));
  }
  void note(std::string s) { notes.push_back(std::move(s)); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Results shared between criteria so each fixture is solved once.
struct Runs {
  std::string name;
  Model m;
  PslpResult pslp;
  double pslp_time = 0.0;
  IsocpResult isocp;
  double isocp_time = 0.0;
};

std::vector<Runs> solve_all() {
  std::vector<Runs> out;
  for (const auto& name : kFixtures) {
    Runs r{name, model(load_feeder(fixture_path(name))), {}, 0.0, {}, 0.0};
    auto t0 = std::chrono::steady_clock::now();
    r.pslp = run_pslp(r.m.sys, lindistflow_solve(r.m.sys));
    r.pslp_time = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    r.isocp = run_isocp(r.m.g, r.m.sys, lindistflow_solve(r.m.sys));
    r.isocp_time = seconds_since(t0);
    out.push_back(std::move(r));
  }
  return out;
}

Outcome quadratic_identity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& name : kFixtures) {
    const Model m = model(load_feeder(fixture_path(name)));
    const Dispatch d = Dispatch::zero(m.g);
    const OperatingPoint x = map_phasor_solution(m.g, m.sys, sweep_powerflow(m.g, LoadModel::Cvr, d), d);
    const double q = residuals(m.sys, x).quad_max;
    worst = std::max(worst, q);
    if (!(q < 1e-9)) o.fail(fmt("%s quad residual %.3e", name.c_str(), q));
  }
  const double t = seconds_since(t0);
  if (!(t < 1.0)) o.fail(fmt("took %.2f s", t));
  o.note(fmt("max quad residual %.2e, %.3f s", worst, t));
  return o;
}

Outcome approx_accuracy(const char* ieee123) {
  Outcome o;
  std::vector<std::string> names = {"4bus.feeder", "4bus_dg.feeder", "ieee13.feeder", "ieee13_dg.feeder"};
  auto check = [&](const std::string& label, const FeederGraph& g, double flow_lim, double volt_lim) {
    const auto t0 = std::chrono::steady_clock::now();
    const Model m = model(g);
    const Dispatch d = Dispatch::zero(g);
    const OperatingPoint a = solve_approx_powerflow(m.sys, d);
    const auto rep = approximation_error_report(g, a, sweep_powerflow(g, LoadModel::Cvr, d));
    const double t = seconds_since(t0);
    o.note(fmt("%s flow %.4f%% volt %.5f pu", label.c_str(), rep.max_flow_error_pct, rep.max_voltage_error));
    if (!(rep.max_flow_error_pct < flow_lim)) o.fail(label + " flow error");
    if (!(rep.max_voltage_error < volt_lim)) o.fail(label + " voltage error");
    if (!(t < 10.0)) o.fail(fmt("%s took %.1f s", label.c_str(), t));
    return rep;
  };
  for (const auto& n : names) check(n, load_feeder(fixture_path(n)), 0.5, 0.005);
  if (ieee123) {
    const auto rep = check("ieee123", load_feeder(ieee123), 0.5, 0.005);
    if (std::abs(rep.max_flow_error_pct - 0.162) > 0.05) o.fail("ieee123 flow error differs from 0.162%");
    if (std::abs(rep.max_voltage_error - 0.0025) > 0.001) o.fail("ieee123 voltage error differs from 0.0025 pu");
  }
  return o;
}

Outcome pslp_convergence(const std::vector<Runs>& runs) {
  Outcome o;
  for (const auto& r : runs) {
    const double eps = r.pslp.trace.empty() ? 0.0 : std::abs(r.pslp.trace.back().epsilon);
    o.note(fmt("%s %d it %.2f s", r.name.c_str(), r.pslp.iterations, r.pslp_time));
    if (!r.pslp.converged) o.fail(r.name + ": " + r.pslp.message);
    if (!(eps < 1e-4)) o.fail(fmt("%s |eps| %.2e", r.name.c_str(), eps));
    if (r.pslp.iterations > 15) o.fail(fmt("%s needed %d iterations", r.name.c_str(), r.pslp.iterations));
    if (!(r.pslp_time < 10.0)) o.fail(fmt("%s took %.1f s", r.name.c_str(), r.pslp_time));
  }
  return o;
}

Outcome isocp_decay(const std::vector<Runs>& runs) {
  Outcome o;
  for (const auto& r : runs) {
    const auto& tr = r.isocp.trace;
    o.note(fmt("%s %d it %.2f s", r.name.c_str(), r.isocp.iterations, r.isocp_time));
    for (std::size_t k = 1; k < tr.size(); ++k)
      if (tr[k].eps > tr[k - 1].eps + 1e-6) o.fail(fmt("%s eps rises at iteration %d", r.name.c_str(), tr[k].iter));
    const double last = tr.empty() ? r.isocp.initial_eps : tr.back().eps;
    if (!r.isocp.converged || !(last < 1e-4)) o.fail(r.name + ": " + r.isocp.message);
    if (r.isocp.iterations > 30) o.fail(fmt("%s needed %d iterations", r.name.c_str(), r.isocp.iterations));
    if (!(r.isocp_time < 60.0)) o.fail(fmt("%s took %.1f s", r.name.c_str(), r.isocp_time));
  }
  return o;
}

Outcome sandwich(const std::vector<Runs>& runs) {
  Outcome o;
  for (const auto& r : runs) {
    double worst = -1e300;
    for (const auto& t : r.isocp.trace) {
      const double excess = (t.bounds.f_socp - t.bounds.f_sys) / std::abs(t.bounds.f_sys);
      worst = std::max(worst, excess);
      if (!(t.bounds.f_socp <= t.bounds.f_sys + 1e-6 * std::abs(t.bounds.f_sys)))
        o.fail(fmt("%s iteration %d f_socp %.7f > f_sys %.7f", r.name.c_str(), t.iter, t.bounds.f_socp, t.bounds.f_sys));
    }
    if (r.isocp.converged && !r.isocp.trace.empty()) {
      const BoundReport& b = r.isocp.trace.back().bounds;
      const double gap = (b.f_sys - b.f_socp) / b.f_sys;
      if (!(gap < 5e-3)) o.fail(fmt("%s final gap %.3e", r.name.c_str(), gap));
    }
    if (!r.isocp.trace.empty()) o.note(fmt("%s max (f_socp-f_sys)/f_sys %.2e", r.name.c_str(), worst));
  }
  return o;
}

Outcome agreement(const std::vector<Runs>& runs) {
  Outcome o;
  for (const auto& r : runs) {
    const double d = std::abs(r.pslp.objective_mw - r.isocp.objective_mw) / r.isocp.objective_mw;
    o.note(fmt("%s %.2e", r.name.c_str(), d));
    if (!(d < 5e-3)) o.fail(r.name);
  }
  return o;
}

Outcome dispatch_validity(const std::vector<Runs>& runs) {
  Outcome o;
  ValidationLimits lim;
  lim.v_min = 0.95;
  lim.v_max = 1.05;
  lim.tol = 1e-4;
  for (const auto& r : runs)
    for (auto [algo, d, obj] : {std::tuple{"pslp", &r.pslp.dispatch, r.pslp.objective_mw},
                                std::tuple{"isocp", &r.isocp.dispatch, r.isocp.objective_mw}}) {
      const auto v = validate_dispatch(r.m.g, *d, {}, lim);
      int volt = 0;
      for (const auto& x : v.violations) volt += x.kind != Violation::Kind::Ampacity;
      const double rel = std::abs(v.substation_power_mw - obj) / obj;
      if (volt) o.fail(fmt("%s %s: %d voltage violations", r.name.c_str(), algo, volt));
      if (!(rel < 5e-3)) o.fail(fmt("%s %s: validated power off by %.3e", r.name.c_str(), algo, rel));
    }
  return o;
}

Outcome grid_optimum(const std::vector<Runs>& runs) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const Runs& r = *std::find_if(runs.begin(), runs.end(), [](const Runs& x) { return x.name == "4bus_dg.feeder"; });
  const FeederGraph& g = r.m.g;
  int bus = -1, phase = -1;
  for (int i = 0; i < g.num_buses(); ++i)
    if (g.bus(i).dg) {
      bus = i;
      phase = g.bus(i).dg->phases.phases().front();
    }
  const double lim = g.bus(bus).dg->q_limit(phase);
  const double rating = g.bus(bus).dg->s_rated[phase];
  const int n = 2001;
  const double step = 2.0 * lim / (n - 1);
  double best_q = 0.0, best_p = 1e300;
  for (int k = 0; k < n; ++k) {
    Dispatch d = Dispatch::zero(g);
    d(bus, phase) = -lim + k * step;
    const double p = validate_dispatch(g, d).substation_power_mw;
    if (p < best_p) {
      best_p = p;
      best_q = d(bus, phase);
    }
  }
  const double tol = std::min(rating / 2000.0, step) + 1e-12;
  o.note(fmt("grid optimum q %.6f pu (%.6f MW)", best_q, best_p));
  for (auto [algo, d] : {std::pair{"pslp", &r.pslp.dispatch}, std::pair{"isocp", &r.isocp.dispatch}}) {
    const double q = (*d)(bus, phase);
    o.note(fmt("%s q %.6f", algo, q));
    if (!(std::abs(q - best_q) <= tol)) o.fail(fmt("%s off the grid optimum by %.3e pu", algo, std::abs(q - best_q)));
  }
  const double t = seconds_since(t0);
  if (!(t < 30.0)) o.fail(fmt("took %.1f s", t));
  return o;
}

Outcome table_reproduction(const char* ieee123) {
  Outcome o;
  if (!ieee123) {
    o.kind = Outcome::Skip;
    o.note("set DOPF_IEEE123 to a 123-bus feeder file to run");
    return o;
  }
  // Substation power (MW): without control, PSLP, ISOCP.
  const std::array<std::array<double, 3>, 5> table = {{{3.329, 3.268, 3.261},
                                                       {2.913, 2.848, 2.842},
                                                       {2.502, 2.433, 2.426},
                                                       {2.098, 2.024, 2.018},
                                                       {1.903, 1.821, 1.814}}};
  Scenario sc;
  sc.feeder_path = ieee123;
  sc.dg_penetration = 0.1;
  const FeederGraph base = load_feeder(ieee123);
  const auto reps = sweep_penetration(sc, base, {0.1, 0.2, 0.3, 0.4, 0.5}, 5);
  for (std::size_t k = 0; k < reps.size(); ++k) {
    std::array<double, 3> got = {reps[k].baseline_mw, 0.0, 0.0};
    for (const auto& run : reps[k].runs) got[run.name == "pslp" ? 1 : 2] = run.objective_mw;
    for (int c = 0; c < 3; ++c) {
      const double rel = std::abs(got[c] - table[k][c]) / table[k][c];
      if (!(rel < 1e-2)) o.fail(fmt("%d%% column %d: %.3f vs %.3f", int(10 * (k + 1)), c, got[c], table[k][c]));
    }
  }
  return o;
}

void report(int n, const char* title, const std::function<Outcome()>& f, int& failures) {
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "SKIP";
  std::ostringstream line;
  line << "criterion " << n << ": " << tag << "  " << title;
  for (std::size_t k = 0; k < o.notes.size(); ++k) line << (k ? "; " : " | ") << o.notes[k];
  std::printf("%s\n", line.str().c_str());
  std::fflush(stdout);
  failures += o.kind == Outcome::Fail;
}

}  // namespace

int main() {
  const char* ieee123 = std::getenv("DOPF_IEEE123");
  if (ieee123 && !*ieee123) ieee123 = nullptr;
  int failures = 0;
  report(1, "quadratic identity on mapped sweep solutions", quadratic_identity, failures);
  report(2, "approximate model accuracy", [&] { return approx_accuracy(ieee123); }, failures);
  std::vector<Runs> runs;
  try {
    runs = solve_all();
  } catch (const std::exception& e) {
    std::printf("solver runs threw: %s\n", e.what());
    return 1;
  }
  report(3, "PSLP convergence", [&] { return pslp_convergence(runs); }, failures);
  report(4, "ISOCP gap decay", [&] { return isocp_decay(runs); }, failures);
  report(5, "relaxation lower bound", [&] { return sandwich(runs); }, failures);
  report(6, "PSLP/ISOCP agreement", [&] { return agreement(runs); }, failures);
  report(7, "dispatch validity", [&] { return dispatch_validity(runs); }, failures);
  report(8, "grid-search optimum on 4bus_dg", [&] { return grid_optimum(runs); }, failures);
  report(9, "123-bus penetration table", [&] { return table_reproduction(ieee123); }, failures);
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
