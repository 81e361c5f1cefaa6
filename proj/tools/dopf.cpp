#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dopf/dopf.hpp"

namespace {

// sysexits-style codes
constexpr int kExitNotConverged = 2;
constexpr int kExitUsage = 64;
constexpr int kExitParse = 65;
constexpr int kExitIo = 66;
constexpr int kExitSolver = 70;

struct CommonOptions {
  std::string feeder;
  std::string algo = "both";
  double load_scale = 1.0;
  std::string out;
  std::uint64_t seed = 1;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--feeder", o.feeder, "Feeder file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--algo", o.algo, "pslp | isocp | both")->check(CLI::IsMember({"pslp", "isocp", "both"}));
  cmd->add_option("--load-scale", o.load_scale, "Multiplier applied to every load");
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--seed", o.seed, "Seed for DG placement");
  cmd->add_option("--set", o.sets, "Settings override key=value (repeatable, see `dopf settings`)");
}

dopf::Scenario to_scenario(const CommonOptions& o) {
  dopf::Scenario sc;
  sc.feeder_path = o.feeder;
  sc.algorithm = dopf::parse_algorithm(o.algo);
  sc.load_scale = o.load_scale;
  sc.seed = o.seed;
  sc.overrides = o.sets;
  sc.output_dir = o.out;
  return sc;
}

void print_report(const dopf::RunReport& r) {
  std::printf("baseline %.6f MW", r.baseline_mw);
  if (r.penetration) std::printf("  (penetration %.2f, %zu DG units)", *r.penetration, r.dgs.size());
  std::printf("\n");
  for (const auto& a : r.runs)
    std::printf("%-6s %-10s objective %.6f MW  validated %.6f MW  iters %3d  %.3f s  %s\n", a.name.c_str(),
                a.converged ? "converged" : "FAILED", a.objective_mw, a.validated_mw, a.iterations, a.wall_time,
                a.converged ? "" : a.message.c_str());
}

int cmd_run(const CommonOptions& o, const std::optional<double>& pen, const std::string& dg_list) {
  dopf::Scenario sc = to_scenario(o);
  sc.dg_penetration = pen;
  const dopf::FeederGraph g = dopf::load_feeder(sc.feeder_path);
  if (!dg_list.empty()) sc.dg_list = dopf::parse_dg_list(dopf::read_file(dg_list), g.bases().power_va);
  const dopf::RunReport r = dopf::run_scenario(sc, g);
  dopf::write_run_outputs(r, sc.output_dir);
  print_report(r);
  return r.all_converged() ? 0 : kExitNotConverged;
}

int cmd_sweep(const CommonOptions& o, const std::vector<double>& levels, int jobs) {
  const dopf::Scenario sc = to_scenario(o);
  const auto reports = dopf::sweep_penetration(sc, dopf::load_feeder(sc.feeder_path), levels, jobs);
  bool ok = true;
  for (const auto& r : reports) {
    print_report(r);
    ok = ok && r.all_converged();
  }
  return ok ? 0 : kExitNotConverged;
}

int cmd_validate(const std::string& feeder, const std::string& dispatch_file, const std::string& out) {
  const dopf::FeederGraph g = dopf::load_feeder(feeder);
  nlohmann::json dj;
  try {
    dj = nlohmann::json::parse(dopf::read_file(dispatch_file));
  } catch (const nlohmann::json::parse_error& e) {
    throw dopf::ParseError(dopf::ParseError::Kind::Syntax, 0, std::string("dispatch file: ") + e.what());
  }
  const dopf::Dispatch d = dopf::dispatch_from_json(g, dj);
  const dopf::DispatchValidation v = dopf::validate_dispatch(g, d);
  nlohmann::json viol = nlohmann::json::array();
  for (const auto& x : v.violations) {
    const char* kind = x.kind == dopf::Violation::Kind::VoltageLow    ? "voltage_low"
                       : x.kind == dopf::Violation::Kind::VoltageHigh ? "voltage_high"
                                                                     : "ampacity";
    const std::string where = x.kind == dopf::Violation::Kind::Ampacity
                                  ? g.bus(g.branch(x.index).from).id + "-" + g.bus(g.branch(x.index).to).id
                                  : g.bus(x.index).id;
    viol.push_back({{"kind", kind}, {"at", where}, {"phase", std::string(1, dopf::kPhaseNames[x.phase])},
                    {"value_pu", x.value}, {"limit_pu", x.limit}});
  }
  nlohmann::json j = {{"substation_power_MW", v.substation_power_mw}, {"violations", viol},
                      {"solution", dopf::solution_to_json(g, v.solution)}};
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    dopf::write_file(out, j.dump(2) + "\n");
  std::fprintf(stderr, "substation power %.6f MW, %zu violation(s)\n", v.substation_power_mw, v.violations.size());
  return v.violations.empty() ? 0 : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-phase distribution OPF runner"};
  app.require_subcommand(1);

  CommonOptions run_opt;
  double pen = -1.0;
  std::string dg_list;
  auto* run = app.add_subcommand("run", "Run one scenario");
  add_common(run, run_opt);
  auto* pen_opt = run->add_option("--dg-penetration", pen, "DG active rating over peak load, in [0, 1]");
  run->add_option("--dg-list", dg_list, "File of `bus phase p_kw s_kva` records")
      ->check(CLI::ExistingFile)
      ->excludes(pen_opt);

  CommonOptions sweep_opt;
  std::vector<double> levels;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a DG-penetration sweep");
  add_common(sweep, sweep_opt);
  sweep->add_option("--levels", levels, "Comma-separated penetration levels")->required()->delimiter(',');
  sweep->add_option("--jobs", jobs, "Levels run concurrently")->check(CLI::PositiveNumber);

  std::string v_feeder, v_dispatch, v_out;
  auto* validate = app.add_subcommand("validate", "Apply a dispatch to the exact power flow");
  validate->add_option("--feeder", v_feeder, "Feeder file")->required()->check(CLI::ExistingFile);
  validate->add_option("--dispatch", v_dispatch, "Dispatch JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", v_out, "Write the JSON here instead of stdout");

  app.add_subcommand("settings", "List the keys accepted by --set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_opt, pen_opt->count() ? std::optional<double>(pen) : std::nullopt, dg_list);
    if (*sweep) return cmd_sweep(sweep_opt, levels, jobs);
    if (*validate) return cmd_validate(v_feeder, v_dispatch, v_out);
    for (const auto& k : dopf::setting_keys()) std::printf("%-20s %s\n", k.key.c_str(), k.help.c_str());
    return 0;
  } catch (const dopf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const dopf::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitParse;
  } catch (const dopf::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const dopf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
}
