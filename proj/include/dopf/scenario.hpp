#pragma once

// Scenario configuration, DG placement, single runs and penetration sweeps.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dopf/bfm.hpp"
#include "dopf/feeder.hpp"
#include "dopf/isocp.hpp"
#include "dopf/powerflow.hpp"
#include "dopf/pslp.hpp"

namespace dopf {

enum class Algorithm { Pslp, Isocp, Both };

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "pslp") return Algorithm::Pslp;
  if (s == "isocp") return Algorithm::Isocp;
  if (s == "both") return Algorithm::Both;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected pslp, isocp or both)");
}

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Pslp: return "pslp";
    case Algorithm::Isocp: return "isocp";
    case Algorithm::Both: return "both";
  }
  return "?";
}

/// Inverter profile used when DGs are placed from a penetration level.
struct DgProfile {
  double unit_kva = 48.0;
  /// Inverter rating over active rating.
  double s_over_p = 1.2;
  /// Active output as a fraction of the active rating.
  double output_fraction = 1.0;
};

struct RunSettings {
  PslpSettings pslp;
  IsocpSettings isocp;
  ModelOptions model;
  DgProfile dg;
  std::optional<double> cvr_p;
  std::optional<double> cvr_q;
};

struct SettingKey {
  std::string key;
  std::string help;
  std::function<void(RunSettings&, std::string_view)> apply;
};

namespace detail {

inline double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("setting " + std::string(key) + ": '" + std::string(v) + "' is not a number");
  return out;
}

inline int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("setting " + std::string(key) + ": '" + std::string(v) + "' is not an integer");
  return out;
}

inline double positive(std::string_view key, double x) {
  if (!(x > 0)) throw ConfigError("setting " + std::string(key) + " must be positive");
  return x;
}

inline int positive(std::string_view key, int x) {
  if (x <= 0) throw ConfigError("setting " + std::string(key) + " must be positive");
  return x;
}

}  // namespace detail

/// Every key accepted by `--set key=value`.
inline const std::vector<SettingKey>& setting_keys() {
  using detail::positive;
  using detail::to_int;
  using detail::to_real;
  static const std::vector<SettingKey> keys = {
      {"init", "LinDistFlow start: optimize | zero",
       [](RunSettings& s, std::string_view v) {
         if (v != "optimize" && v != "zero") throw ConfigError("setting init: expected optimize or zero");
         s.pslp.init = s.isocp.init = v == "optimize" ? InitMode::Optimize : InitMode::Zero;
       }},
      {"lp.backend", "LP backend for PSLP and the initializer: ipm | simplex",
       [](RunSettings& s, std::string_view v) {
         if (v != "ipm" && v != "simplex") throw ConfigError("setting lp.backend: expected ipm or simplex");
         s.pslp.lp.backend = v == "ipm" ? conic::Backend::InteriorPoint : conic::Backend::Simplex;
       }},
      {"model.v_min", "lower voltage magnitude limit, pu",
       [](RunSettings& s, std::string_view v) { s.model.v_min = positive("model.v_min", to_real("model.v_min", v)); }},
      {"model.v_max", "upper voltage magnitude limit, pu",
       [](RunSettings& s, std::string_view v) { s.model.v_max = positive("model.v_max", to_real("model.v_max", v)); }},
      {"model.slack_v", "substation voltage magnitude, pu",
       [](RunSettings& s, std::string_view v) { s.model.slack_v = positive("model.slack_v", to_real("model.slack_v", v)); }},
      {"model.l_cap", "squared-current cap on branches without ampacity, pu",
       [](RunSettings& s, std::string_view v) { s.model.l_cap = positive("model.l_cap", to_real("model.l_cap", v)); }},
      {"pslp.tol", "objective-change tolerance, MW",
       [](RunSettings& s, std::string_view v) { s.pslp.tol = positive("pslp.tol", to_real("pslp.tol", v)); }},
      {"pslp.s0", "initial step bound, pu",
       [](RunSettings& s, std::string_view v) { s.pslp.s0 = positive("pslp.s0", to_real("pslp.s0", v)); }},
      {"pslp.penalty", "elastic penalty weight",
       [](RunSettings& s, std::string_view v) { s.pslp.penalty = positive("pslp.penalty", to_real("pslp.penalty", v)); }},
      {"pslp.max_iters", "LP iteration limit",
       [](RunSettings& s, std::string_view v) { s.pslp.max_iters = positive("pslp.max_iters", to_int("pslp.max_iters", v)); }},
      {"pslp.feas_tol", "residual accepted at convergence, pu",
       [](RunSettings& s, std::string_view v) { s.pslp.feas_tol = positive("pslp.feas_tol", to_real("pslp.feas_tol", v)); }},
      {"pslp.step_rule", "step-bound update: verbatim (halve on improvement) | inverted",
       [](RunSettings& s, std::string_view v) {
         if (v != "verbatim" && v != "inverted") throw ConfigError("setting pslp.step_rule: expected verbatim or inverted");
         s.pslp.step_rule = v == "verbatim" ? StepRule::Verbatim : StepRule::Inverted;
       }},
      {"pslp.mode", "penalty | plain (fixed step bound)",
       [](RunSettings& s, std::string_view v) {
         if (v != "penalty" && v != "plain") throw ConfigError("setting pslp.mode: expected penalty or plain");
         s.pslp.mode = v == "penalty" ? PslpMode::Penalty : PslpMode::PlainSlp;
       }},
      {"isocp.tol", "feasibility-gap tolerance, pu",
       [](RunSettings& s, std::string_view v) { s.isocp.tol = positive("isocp.tol", to_real("isocp.tol", v)); }},
      {"isocp.gamma", "gap contraction factor in (0, 1)",
       [](RunSettings& s, std::string_view v) {
         const double g = to_real("isocp.gamma", v);
         if (!(g > 0 && g < 1)) throw ConfigError("setting isocp.gamma must lie in (0, 1)");
         s.isocp.gamma = g;
       }},
      {"isocp.alpha", "update damping in (0, 1]",
       [](RunSettings& s, std::string_view v) {
         const double a = to_real("isocp.alpha", v);
         if (!(a > 0 && a <= 1)) throw ConfigError("setting isocp.alpha must lie in (0, 1]");
         s.isocp.alpha = a;
       }},
      {"isocp.max_iters", "SOCP iteration limit",
       [](RunSettings& s, std::string_view v) { s.isocp.max_iters = positive("isocp.max_iters", to_int("isocp.max_iters", v)); }},
      {"isocp.feas_tol", "linear residual accepted at convergence, pu",
       [](RunSettings& s, std::string_view v) { s.isocp.feas_tol = positive("isocp.feas_tol", to_real("isocp.feas_tol", v)); }},
      {"dg.unit_kva", "inverter rating of each placed DG unit, kVA",
       [](RunSettings& s, std::string_view v) { s.dg.unit_kva = positive("dg.unit_kva", to_real("dg.unit_kva", v)); }},
      {"dg.s_over_p", "inverter rating over active rating, >= 1",
       [](RunSettings& s, std::string_view v) {
         const double r = to_real("dg.s_over_p", v);
         if (!(r >= 1)) throw ConfigError("setting dg.s_over_p must be at least 1");
         s.dg.s_over_p = r;
       }},
      {"dg.output_fraction", "active output over active rating, in [0, 1]",
       [](RunSettings& s, std::string_view v) {
         const double f = to_real("dg.output_fraction", v);
         if (!(f >= 0 && f <= 1)) throw ConfigError("setting dg.output_fraction must lie in [0, 1]");
         s.dg.output_fraction = f;
       }},
      {"load.cvr_p", "override every active CVR factor",
       [](RunSettings& s, std::string_view v) { s.cvr_p = to_real("load.cvr_p", v); }},
      {"load.cvr_q", "override every reactive CVR factor",
       [](RunSettings& s, std::string_view v) { s.cvr_q = to_real("load.cvr_q", v); }},
  };
  return keys;
}

/// Applies `key=value`; unknown keys are rejected.
inline void apply_setting(RunSettings& s, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  const std::string_view key = detail::trim(assignment.substr(0, eq));
  const std::string_view value = detail::trim(assignment.substr(eq + 1));
  for (const auto& k : setting_keys())
    if (k.key == key) return k.apply(s, value);
  throw ConfigError("unknown setting '" + std::string(key) + "'");
}

/// One inverter, per-unit on the feeder base.
struct DgUnit {
  std::string bus;
  int phase = 0;
  double p_out = 0.0;
  double s_rated = 0.0;
};

/// Total active load over all phases, pu.
inline double total_active_load(const FeederGraph& g) {
  double p = 0.0;
  for (const auto& b : g.buses())
    if (b.load)
      for (int ph : b.load->phases.phases()) p += b.load->p0[ph];
  return p;
}

/// Seeded placement: each unit lands on a loaded bus phase with probability
/// proportional to its active load. Unit k is the same for every level, so a
/// higher penetration only adds units.
inline std::vector<DgUnit> place_dgs(const FeederGraph& g, double penetration, const DgProfile& profile,
                                     std::uint64_t seed) {
  if (!(penetration >= 0 && penetration <= 1)) throw ConfigError("penetration must lie in [0, 1]");
  const double s_unit = profile.unit_kva * 1e3 / g.bases().power_va;
  const double p_unit = s_unit / profile.s_over_p;
  const int count = static_cast<int>(std::lround(penetration * total_active_load(g) / p_unit));
  std::vector<std::pair<int, int>> slots;
  std::vector<double> weights;
  for (int i = 0; i < g.num_buses(); ++i) {
    const Bus& b = g.bus(i);
    if (!b.load || b.is_substation) continue;
    for (int ph : b.load->phases.phases())
      if (b.load->p0[ph] > 0) {
        slots.emplace_back(i, ph);
        weights.push_back(b.load->p0[ph]);
      }
  }
  std::vector<DgUnit> units;
  if (count == 0 || slots.empty()) return units;
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  for (int k = 0; k < count; ++k) {
    const auto [bus, ph] = slots[pick(rng)];
    units.push_back({g.bus(bus).id, ph, profile.output_fraction * p_unit, s_unit});
  }
  return units;
}

/// Replaces every DG of `g` by `units`; units sharing a bus phase add up.
inline FeederGraph apply_dg_units(const FeederGraph& g, const std::vector<DgUnit>& units) {
  std::vector<std::optional<DgSpec>> dgs(static_cast<std::size_t>(g.num_buses()));
  for (const auto& u : units) {
    const auto bus = g.find_bus(u.bus);
    if (!bus) throw ConfigError("DG on unknown bus '" + u.bus + "'");
    const Bus& b = g.bus(*bus);
    if (b.is_substation) throw ConfigError("DG on the substation bus '" + u.bus + "'");
    if (!b.phases.contains(u.phase)) throw ConfigError("DG on absent phase of bus '" + u.bus + "'");
    auto& d = dgs[static_cast<std::size_t>(*bus)];
    if (!d) d = DgSpec{};
    d->phases = PhaseSet(d->phases.mask() | PhaseSet::single(u.phase).mask());
    d->p_out[u.phase] += u.p_out;
    d->s_rated[u.phase] += u.s_rated;
  }
  return with_dgs(g, dgs);
}

/// Reads `<bus> <phase> <p_out kW> <s_rated kVA>` records.
inline std::vector<DgUnit> parse_dg_list(std::string_view text, double power_base_va) {
  std::vector<DgUnit> out;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    const auto f = detail::split_ws(raw);
    if (f.empty()) continue;
    if (f.size() != 4) throw ParseError(ParseError::Kind::Syntax, line_no, "DG record needs bus, phase, p_out, s_rated");
    if (f[1].size() != 1 || PhaseSet::phase_index(f[1][0]) < 0)
      throw ParseError(ParseError::Kind::Syntax, line_no, "bad phase '" + std::string(f[1]) + "'");
    const auto p = detail::parse_double(f[2]);
    const auto s = detail::parse_double(f[3]);
    if (!p || !s || *p < 0 || *s <= 0) throw ParseError(ParseError::Kind::Syntax, line_no, "bad DG rating");
    if (*p > *s) throw ParseError(ParseError::Kind::Semantic, line_no, "DG output exceeds its rating");
    out.push_back({std::string(f[0]), PhaseSet::phase_index(f[1][0]), *p * 1e3 / power_base_va, *s * 1e3 / power_base_va});
  }
  return out;
}

struct Scenario {
  std::string feeder_path;
  Algorithm algorithm = Algorithm::Both;
  double load_scale = 1.0;
  std::optional<double> dg_penetration;
  std::optional<std::vector<DgUnit>> dg_list;
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;
  std::string output_dir;
};

struct AlgorithmRun {
  std::string name;
  bool converged = false;
  std::string message;
  double objective_mw = 0.0;
  double validated_mw = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  int violations = 0;
  int iterations = 0;
  double wall_time = 0.0;
  Dispatch dispatch;
  std::optional<PslpResult> pslp;
  std::optional<IsocpResult> isocp;
};

struct RunReport {
  std::string feeder;
  double load_scale = 1.0;
  std::optional<double> penetration;
  std::uint64_t seed = 1;
  double power_base_va = 1e6;
  std::vector<DgUnit> dgs;
  double baseline_mw = 0.0;
  int baseline_violations = 0;
  std::vector<AlgorithmRun> runs;
  /// Graph the algorithms ran on (after scaling and DG placement).
  std::shared_ptr<const FeederGraph> graph;

  bool all_converged() const {
    return std::all_of(runs.begin(), runs.end(), [](const AlgorithmRun& r) { return r.converged; });
  }
  const AlgorithmRun* find(std::string_view name) const {
    for (const auto& r : runs)
      if (r.name == name) return &r;
    return nullptr;
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline RunSettings resolve_settings(const Scenario& sc) {
  RunSettings s;
  for (const auto& o : sc.overrides) apply_setting(s, o);
  if (s.model.v_min >= s.model.v_max) throw ConfigError("model.v_min must be below model.v_max");
  return s;
}

/// Applies load scaling, CVR overrides and DG placement to the file's feeder.
inline FeederGraph prepare_feeder(const FeederGraph& base, const Scenario& sc, const RunSettings& s,
                                  std::vector<DgUnit>* placed = nullptr) {
  if (!(sc.load_scale > 0)) throw ConfigError("load scale must be positive");
  if (sc.dg_penetration && sc.dg_list) throw ConfigError("give either a DG penetration or a DG list, not both");
  FeederGraph g = base;
  if (s.cvr_p || s.cvr_q) {
    std::vector<Bus> buses = g.buses();
    for (auto& b : buses)
      if (b.load)
        for (int p = 0; p < kNumPhases; ++p) {
          if (s.cvr_p) b.load->cvr_p[p] = *s.cvr_p;
          if (s.cvr_q) b.load->cvr_q[p] = *s.cvr_q;
        }
    g = FeederGraph(g.bases(), std::move(buses), g.branches(), g.units());
  }
  std::vector<DgUnit> units;
  if (sc.dg_penetration) {
    units = place_dgs(g, *sc.dg_penetration, s.dg, sc.seed);
    g = apply_dg_units(g, units);
  } else if (sc.dg_list) {
    units = *sc.dg_list;
    g = apply_dg_units(g, units);
  } else {
    for (const auto& b : g.buses())
      if (b.dg)
        for (int p : b.dg->phases.phases()) units.push_back({b.id, p, b.dg->p_out[p], b.dg->s_rated[p]});
  }
  if (placed) *placed = units;
  return scale_loads(g, sc.load_scale);
}

namespace detail {

inline void fill_validation(const FeederGraph& g, AlgorithmRun& r, const SweepOptions& sw) {
  const DispatchValidation v = validate_dispatch(g, r.dispatch, sw);
  r.validated_mw = v.substation_power_mw;
  r.violations = static_cast<int>(v.violations.size());
  r.v_min = 1e9;
  r.v_max = 0.0;
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p : g.bus(i).phases.phases()) {
      r.v_min = std::min(r.v_min, v.voltages[i][p]);
      r.v_max = std::max(r.v_max, v.voltages[i][p]);
    }
}

}  // namespace detail

/// Runs the scenario on an already parsed feeder. Writes outputs when
/// `sc.output_dir` is set.
inline RunReport run_scenario(const Scenario& sc, const FeederGraph& base) {
  const RunSettings s = resolve_settings(sc);
  RunReport rep;
  rep.feeder = sc.feeder_path;
  rep.load_scale = sc.load_scale;
  rep.penetration = sc.dg_penetration;
  rep.seed = sc.seed;
  rep.power_base_va = base.bases().power_va;
  auto g = std::make_shared<const FeederGraph>(prepare_feeder(base, sc, s, &rep.dgs));
  rep.graph = g;

  SweepOptions sw;
  sw.slack_v = s.model.slack_v;
  const DispatchValidation baseline = validate_dispatch(*g, Dispatch::zero(*g), sw);
  rep.baseline_mw = baseline.substation_power_mw;
  rep.baseline_violations = static_cast<int>(baseline.violations.size());

  const ConstraintSystem sys = build_constraints(*g, extract_angle_table(*g, sw), s.model);
  if (sc.algorithm != Algorithm::Isocp) {
    PslpResult r = run_pslp(sys, lindistflow_solve(sys, s.pslp.init, s.pslp.lp), s.pslp);
    AlgorithmRun a;
    a.name = "pslp";
    a.converged = r.converged;
    a.message = r.message;
    a.objective_mw = r.objective_mw;
    a.iterations = r.iterations;
    a.wall_time = r.wall_time;
    a.dispatch = r.dispatch;
    a.pslp = std::move(r);
    detail::fill_validation(*g, a, sw);
    rep.runs.push_back(std::move(a));
  }
  if (sc.algorithm != Algorithm::Pslp) {
    IsocpResult r = run_isocp(*g, sys, lindistflow_solve(sys, s.isocp.init, s.isocp.socp), s.isocp, sw);
    AlgorithmRun a;
    a.name = "isocp";
    a.converged = r.converged;
    a.message = r.message;
    a.objective_mw = r.objective_mw;
    a.iterations = r.iterations;
    a.wall_time = r.wall_time;
    a.dispatch = r.dispatch;
    a.isocp = std::move(r);
    detail::fill_validation(*g, a, sw);
    rep.runs.push_back(std::move(a));
  }
  return rep;
}

/// Dispatch as `{"dispatch": [{"bus", "phase", "q_kvar"}]}` over every DG phase.
inline nlohmann::json dispatch_to_json(const FeederGraph& g, const Dispatch& d) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < g.num_buses(); ++i) {
    const Bus& b = g.bus(i);
    if (!b.dg) continue;
    for (int p : b.dg->phases.phases())
      arr.push_back({{"bus", b.id}, {"phase", std::string(1, kPhaseNames[p])}, {"q_kvar", d(i, p) * g.bases().power_va / 1e3}});
  }
  return {{"dispatch", arr}};
}

inline Dispatch dispatch_from_json(const FeederGraph& g, const nlohmann::json& j) {
  Dispatch d = Dispatch::zero(g);
  if (!j.is_object() || !j.contains("dispatch") || !j["dispatch"].is_array())
    throw ParseError(ParseError::Kind::Syntax, 0, "dispatch file needs a \"dispatch\" array");
  for (const auto& e : j["dispatch"]) {
    if (!e.is_object() || !e.contains("bus") || !e.contains("phase") || !e.contains("q_kvar") || !e["bus"].is_string() ||
        !e["phase"].is_string() || !e["q_kvar"].is_number())
      throw ParseError(ParseError::Kind::Syntax, 0, "dispatch entries need string bus, string phase, numeric q_kvar");
    const std::string bus = e["bus"], phase = e["phase"];
    const auto i = g.find_bus(bus);
    if (!i) throw ParseError(ParseError::Kind::Semantic, 0, "dispatch names unknown bus '" + bus + "'");
    const int p = phase.size() == 1 ? PhaseSet::phase_index(phase[0]) : -1;
    const Bus& b = g.bus(*i);
    if (p < 0 || !b.dg || !b.dg->phases.contains(p))
      throw ParseError(ParseError::Kind::Semantic, 0, "no DG at bus '" + bus + "' phase '" + phase + "'");
    d(*i, p) = e["q_kvar"].get<double>() * 1e3 / g.bases().power_va;
  }
  return d;
}

/// Report without wall-clock fields, so repeated runs compare byte for byte.
inline nlohmann::json report_to_json(const RunReport& r) {
  using nlohmann::json;
  json dgs = json::array();
  for (const auto& u : r.dgs)
    dgs.push_back({{"bus", u.bus},
                   {"phase", std::string(1, kPhaseNames[u.phase])},
                   {"p_out_kw", u.p_out * r.power_base_va / 1e3},
                   {"s_rated_kva", u.s_rated * r.power_base_va / 1e3}});
  json runs = json::array();
  for (const auto& a : r.runs) {
    json j = {{"algorithm", a.name},
              {"converged", a.converged},
              {"message", a.message},
              {"objective_MW", a.objective_mw},
              {"validated_MW", a.validated_mw},
              {"reduction_MW", r.baseline_mw - a.validated_mw},
              {"iterations", a.iterations},
              {"violations", a.violations},
              {"v_min_pu", a.v_min},
              {"v_max_pu", a.v_max},
              {"dispatch", dispatch_to_json(*r.graph, a.dispatch)["dispatch"]}};
    if (a.isocp) j["gap_trace"] = isocp_gap_trace_json(*a.isocp);
    runs.push_back(std::move(j));
  }
  json out = {{"feeder", r.feeder},
              {"load_scale", r.load_scale},
              {"seed", r.seed},
              {"power_base_va", r.power_base_va},
              {"dgs", dgs},
              {"baseline_MW", r.baseline_mw},
              {"baseline_violations", r.baseline_violations},
              {"all_converged", r.all_converged()},
              {"runs", runs}};
  out["dg_penetration"] = r.penetration ? json(*r.penetration) : json(nullptr);
  return out;
}

inline nlohmann::json timing_to_json(const RunReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& a : r.runs) j[a.name] = {{"wall_time_s", a.wall_time}, {"iterations", a.iterations}};
  return j;
}

/// report.json, timing.json, <algo>_trace.csv, <algo>_dispatch.json and isocp_gap.json.
inline void write_run_outputs(const RunReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_file(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_file(dir / "timing.json", timing_to_json(r).dump(2) + "\n");
  for (const auto& a : r.runs) {
    write_file(dir / (a.name + "_dispatch.json"), dispatch_to_json(*r.graph, a.dispatch).dump(2) + "\n");
    std::ostringstream csv;
    if (a.pslp) write_pslp_trace_csv(*a.pslp, csv);
    if (a.isocp) {
      write_isocp_trace_csv(*a.isocp, csv);
      write_file(dir / "isocp_gap.json", isocp_gap_trace_json(*a.isocp).dump(2) + "\n");
    }
    write_file(dir / (a.name + "_trace.csv"), csv.str());
  }
}

inline FeederGraph load_feeder(const std::string& path) { return parse_feeder(read_file(path)); }

inline RunReport run_scenario(const Scenario& sc) {
  const RunReport r = run_scenario(sc, load_feeder(sc.feeder_path));
  if (!sc.output_dir.empty()) write_run_outputs(r, sc.output_dir);
  return r;
}

inline std::string level_dir_name(double level) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "level_" << level;
  return os.str();
}

inline void write_sweep_summary_csv(const std::vector<RunReport>& reports, std::ostream& os) {
  os.precision(10);
  os << "penetration,dg_units,baseline_MW,algorithm,objective_MW,validated_MW,reduction_MW,iterations,converged\n";
  for (const auto& r : reports)
    for (const auto& a : r.runs)
      os << r.penetration.value_or(0.0) << "," << r.dgs.size() << "," << r.baseline_mw << "," << a.name << ","
         << a.objective_mw << "," << a.validated_mw << "," << r.baseline_mw - a.validated_mw << "," << a.iterations
         << "," << (a.converged ? 1 : 0) << "\n";
}

/// One run per level, at most `jobs` at a time. Reports come back in level order.
inline std::vector<RunReport> sweep_penetration(const Scenario& base_sc, const FeederGraph& base,
                                                const std::vector<double>& levels, int jobs = 1) {
  if (levels.empty()) throw ConfigError("no penetration levels given");
  if (base_sc.dg_list) throw ConfigError("a penetration sweep cannot use an explicit DG list");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] > 0 && levels[k] <= 1)) throw ConfigError("penetration levels must lie in (0, 1]");
    if (k > 0 && !(levels[k] > levels[k - 1])) throw ConfigError("penetration levels must be strictly increasing");
  }
  resolve_settings(base_sc);
  std::vector<RunReport> out(levels.size());
  std::vector<std::exception_ptr> errors(levels.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < levels.size(); k = next++) {
      try {
        Scenario sc = base_sc;
        sc.dg_penetration = levels[k];
        out[k] = run_scenario(sc, base);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(levels.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (!base_sc.output_dir.empty()) {
    const std::filesystem::path dir(base_sc.output_dir);
    for (std::size_t k = 0; k < levels.size(); ++k) write_run_outputs(out[k], dir / level_dir_name(levels[k]));
    std::ostringstream csv;
    write_sweep_summary_csv(out, csv);
    write_file(dir / "summary.csv", csv.str());
  }
  return out;
}

}  // namespace dopf
