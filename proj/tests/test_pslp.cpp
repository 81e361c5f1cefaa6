#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dopf/pslp.hpp"
#include "fixtures.hpp"

using namespace dopf;

namespace {

double row_value(const LinearizedRow& r, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (const auto& t : r.terms) s += t.coeff * x[t.var];
  return s - r.rhs;
}

struct Exact {
  FeederGraph g;
  ConstraintSystem sys;
  OperatingPoint x;
};

Exact exact_point(const std::string& name) {
  FeederGraph g = testdata::load(name);
  ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  OperatingPoint x = map_phasor_solution(g, sys, sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g)), Dispatch::zero(g));
  return {std::move(g), std::move(sys), std::move(x)};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST(Linearize, TangentAtHandPoint) {
  const FeederGraph g = load_feeder(testdata::test_path("two_bus.feeder"));
  const ConstraintSystem sys = build_constraints(g, AngleTable(1));
  const VariableLayout& L = *sys.layout;
  OperatingPoint x{sys.layout, Eigen::VectorXd::Zero(L.size())};
  x.x[L.P[0][0]] = 0.3;
  x.x[L.Q[0][0]] = 0.1;
  const Linearization lin = linearize_quadratics(sys, x);
  ASSERT_EQ(lin.rows.size(), 1u);
  // Solve the row for l with everything else at the expansion point.
  x.x[L.lpp[0][0]] = 0.0;
  EXPECT_NEAR(-row_value(lin.rows[0], x.x), 0.10, 1e-15);
}

TEST(Linearize, TangentOnEveryFixture) {
  // Row value at the expansion point equals the quadratic's own value there.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  for (const auto& name : testdata::bundled()) {
    const FeederGraph g = testdata::load(name);
    const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
    OperatingPoint x = lindistflow_solve(sys);
    for (Eigen::Index k = 0; k < x.x.size(); ++k) x.x[k] *= u(rng);
    const Linearization lin = linearize_quadratics(sys, x);
    ASSERT_EQ(lin.rows.size(), sys.pp.size() + sys.pq.size());
    for (std::size_t k = 0; k < sys.pp.size(); ++k) {
      const double v = x.v(sys.pp[k].branch >= 0 ? g.branch(sys.pp[k].branch).from : 0, sys.pp[k].phase);
      EXPECT_NEAR(row_value(lin.rows[k], x.x), -sys.pp_residual(sys.pp[k], x.x) / v, 1e-12) << name;
    }
    backfill_currents(sys, x.x);
    const Linearization at = linearize_quadratics(sys, x);
    // Regularized branches trade tangency for finite ratios.
    auto floored = [&](int e) { return std::find(at.regularized.begin(), at.regularized.end(), e) != at.regularized.end(); };
    for (const auto& r : at.rows)
      if (!floored(r.branch)) EXPECT_LT(std::abs(row_value(r, x.x)), 1e-12) << name;
  }
}

TEST(Linearize, SymmetricPairGivesGeometricMean) {
  const FeederGraph g = testdata::load("balanced3.feeder");
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  const VariableLayout& L = *sys.layout;
  OperatingPoint x{sys.layout, Eigen::VectorXd::Constant(L.size(), 1.0)};
  for (int p = 0; p < 3; ++p) {
    x.x[L.P[0][p]] = 0.2;
    x.x[L.Q[0][p]] = 0.1;
  }
  const Linearization lin = linearize_quadratics(sys, x);
  const double Lval = 0.037;
  for (int p = 0; p < 3; ++p) x.x[L.lpp[0][p]] = Lval;
  for (std::size_t k = 0; k < sys.pq.size(); ++k) {
    if (sys.pq[k].branch != 0) continue;
    const LinearizedRow& r = lin.rows[sys.pp.size() + k];
    x.x[sys.pq[k].lpq] = 0.0;
    EXPECT_NEAR(-row_value(r, x.x), Lval, 1e-15);
  }
}

TEST(Linearize, SecondOrderAccurate) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e-4, 1e-4);
  for (const char* name : {"4bus.feeder", "ieee13.feeder"}) {
    // Relative perturbation, so second-order terms scale with each value.
    const Exact e = exact_point(name);
    const Linearization lin = linearize_quadratics(e.sys, e.x);
    auto floored = [&](int b) { return std::find(lin.regularized.begin(), lin.regularized.end(), b) != lin.regularized.end(); };
    Eigen::VectorXd y = e.x.x;
    for (Eigen::Index k = 0; k < y.size(); ++k) y[k] *= 1.0 + u(rng);
    const double vs = e.sys.layout->slack_v2;
    for (std::size_t k = 0; k < e.sys.pp.size(); ++k) {
      const PpQuad& d = e.sys.pp[k];
      const double v = d.v >= 0 ? y[d.v] : vs;
      const double truth = (y[d.P] * y[d.P] + y[d.Q] * y[d.Q]) / v;
      const double lin_l = y[d.l] - row_value(lin.rows[k], y);
      EXPECT_LT(std::abs(lin_l - truth), 1e-7 * truth + 1e-15) << name << " pp " << k;
    }
    for (std::size_t k = 0; k < e.sys.pq.size(); ++k) {
      const PqQuad& d = e.sys.pq[k];
      if (floored(d.branch)) continue;
      const double truth = std::sqrt(y[d.lpp] * y[d.lqq]);
      const double lin_l = y[d.lpq] - row_value(lin.rows[e.sys.pp.size() + k], y);
      EXPECT_LT(std::abs(lin_l - truth), 1e-7 * truth + 1e-15) << name << " pq " << k;
    }
  }
}

TEST(Linearize, RegularizesUnloadedBranches) {
  const FeederGraph g = load_feeder(testdata::test_path("zero_load.feeder"));
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  const OperatingPoint x = lindistflow_solve(sys);
  const Linearization lin = linearize_quadratics(sys, x);
  EXPECT_FALSE(lin.regularized.empty());
  for (const auto& r : lin.rows)
    for (const auto& t : r.terms) EXPECT_TRUE(std::isfinite(t.coeff));
}

TEST(Linearize, ZeroVoltageIsDegenerate) {
  const FeederGraph g = testdata::load("4bus.feeder");
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  OperatingPoint x = lindistflow_solve(sys);
  x.x[sys.layout->v[1][2]] = 0.0;
  try {
    linearize_quadratics(sys, x);
    FAIL();
  } catch (const DegenerateLinearization& err) {
    EXPECT_EQ(err.branch(), 1);
  }
}

TEST(PslpLp, StationaryPointStaysPut) {
  const FeederGraph g = testdata::load("4bus.feeder");
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  const OperatingPoint x = solve_approx_powerflow(sys, Dispatch::zero(g));
  const auto rep = conic::solve(build_pslp_lp(sys, x, linearize_quadratics(sys, x), 0.01, 1e4));
  ASSERT_EQ(rep.status, conic::SolveStatus::Optimal);
  EXPECT_LT(rep.primal->cwiseAbs().maxCoeff(), 1e-7);
}

TEST(PslpLp, ElasticsAbsorbWhatTheStepCannot) {
  // Two free variables, one row y0 + y1 = 0.5, objective y0, start at 0 with s = 0.1.
  auto layout = std::make_shared<VariableLayout>();
  layout->names = {"y0", "y1"};
  ConstraintSystem sys;
  sys.layout = layout;
  sys.rows.push_back({RowKind::ActiveBalance, 0, 0, {{0, 1.0}, {1, 1.0}}, 0.5});
  sys.objective = {{0, 1.0}};
  sys.lo = Eigen::VectorXd::Constant(2, -conic::kInf);
  sys.hi = Eigen::VectorXd::Constant(2, conic::kInf);
  const OperatingPoint x{layout, Eigen::VectorXd::Zero(2)};
  const conic::ConicProgram lp = build_pslp_lp(sys, x, {}, 0.1, 1e4);
  ASSERT_EQ(lp.num_variables(), 4);
  for (auto backend : {conic::Backend::InteriorPoint, conic::Backend::Simplex}) {
    conic::SolverSettings s;
    s.backend = backend;
    const auto rep = conic::solve(lp, s);
    ASSERT_EQ(rep.status, conic::SolveStatus::Optimal);
    const Eigen::VectorXd& y = *rep.primal;
    EXPECT_NEAR(y[0], 0.1, 1e-7);
    EXPECT_NEAR(y[1], 0.1, 1e-7);
    EXPECT_NEAR(y[2] + y[3], 0.3, 1e-7);
    EXPECT_NEAR(rep.objective, 0.1 + 0.3e4, 1e-4);
  }
}

TEST(PslpLp, FirstIterationRespectsStepBox) {
  const FeederGraph g = testdata::load("4bus_dg.feeder");
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  const OperatingPoint x = lindistflow_solve(sys);
  const conic::ConicProgram lp = build_pslp_lp(sys, x, linearize_quadratics(sys, x), 0.01, 1e4);
  const auto rep = conic::solve(lp);
  ASSERT_EQ(rep.status, conic::SolveStatus::Optimal);
  EXPECT_LE(rep.primal->head(sys.num_variables()).cwiseAbs().maxCoeff(), 0.01 + 1e-9);
  EXPECT_TRUE(conic::verify_primal(lp, *rep.primal, 1e-6).empty());
  for (Eigen::Index j = sys.num_variables(); j < rep.primal->size(); ++j) EXPECT_GE((*rep.primal)[j], -1e-9);
}

TEST(Pslp, ConvergesOnEveryFixture) {
  for (const auto& name : testdata::bundled()) {
    const FeederGraph g = testdata::load(name);
    const PslpResult r = run_pslp(g);
    ASSERT_TRUE(r.converged) << name << ": " << r.message;
    EXPECT_LE(r.iterations, 15) << name;
    EXPECT_LT(std::abs(r.trace.back().epsilon), 1e-4);
    for (const auto& t : r.trace) {
      EXPECT_GE(t.elastic_mass, 0.0);
      if (t.max_quad_residual < 1e-6) EXPECT_LT(t.elastic_mass, 1e-6) << name << " iter " << t.iter;
    }
    const auto v = validate_dispatch(g, r.dispatch);
    EXPECT_LT(std::abs(v.substation_power_mw - r.objective_mw) / r.objective_mw, 5e-3) << name;
    for (const auto& x : v.violations) EXPECT_NE(x.kind, Violation::Kind::VoltageLow) << name;
    for (const auto& x : v.violations) EXPECT_NE(x.kind, Violation::Kind::VoltageHigh) << name;
  }
}

TEST(Pslp, StepBoundFollowsVerbatimRule) {
  for (StepRule rule : {StepRule::Verbatim, StepRule::Inverted}) {
    PslpSettings set;
    set.step_rule = rule;
    set.tol = 1e-9;
    set.max_iters = 8;
    const PslpResult r = run_pslp(testdata::load("ieee13_dg.feeder"), set);
    ASSERT_GE(r.trace.size(), 2u);
    EXPECT_EQ(r.trace[0].step_bound, set.s0);
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
      const bool shrink = rule == StepRule::Verbatim ? r.trace[k - 1].epsilon > 0 : r.trace[k - 1].epsilon <= 0;
      const double expect = shrink ? r.trace[k - 1].step_bound / 2.0 : r.trace[k - 1].step_bound * 2.0;
      EXPECT_EQ(r.trace[k].step_bound, std::max(expect, set.s_floor)) << k;
    }
  }
}

TEST(Pslp, NoControlMeansApproximatePowerFlowPoint) {
  for (const char* name : {"4bus.feeder", "balanced3.feeder", "ieee13.feeder"}) {
    const FeederGraph g = testdata::load(name);
    const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
    const PslpResult r = run_pslp(sys, lindistflow_solve(sys));
    ASSERT_TRUE(r.converged) << name;
    // The first move is clipped by s0 on the larger feeders, which costs one extra pass.
    EXPECT_LE(r.iterations, std::string(name) == "4bus.feeder" ? 2 : 3) << name;
    const OperatingPoint pf = solve_approx_powerflow(sys, Dispatch::zero(g));
    EXPECT_NEAR(r.objective_mw, sys.objective_mw(pf.x), 1e-5) << name;
  }
}

TEST(Pslp, PlainSlpModeRuns) {
  PslpSettings set;
  set.mode = PslpMode::PlainSlp;
  set.max_iters = 10;
  const PslpResult r = run_pslp(testdata::load("4bus_dg.feeder"), set);
  EXPECT_LE(r.iterations, 10);
  for (const auto& t : r.trace) EXPECT_EQ(t.step_bound, set.s0);
}

TEST(Pslp, RejectsBadSettings) {
  const FeederGraph g = testdata::load("4bus.feeder");
  for (auto tweak : {+[](PslpSettings& s) { s.tol = 0; }, +[](PslpSettings& s) { s.s0 = -1; },
                     +[](PslpSettings& s) { s.penalty = 0; }}) {
    PslpSettings s;
    tweak(s);
    EXPECT_THROW(run_pslp(g, s), ModelError);
  }
}

TEST(Pslp, TraceCsvMatchesSchema) {
  const PslpResult r = run_pslp(testdata::load("4bus_dg.feeder"));
  std::stringstream ss;
  write_pslp_trace_csv(r, ss);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "iter,objective_MW,epsilon,step_bound,elastic_mass,max_quad_residual");
  int rows = 0;
  while (std::getline(ss, line)) {
    const auto f = split_csv(line);
    ASSERT_EQ(f.size(), 6u);
    EXPECT_EQ(std::stoi(f[0]), ++rows);
    for (const auto& v : f) EXPECT_TRUE(std::isfinite(std::stod(v)));
    EXPECT_GT(std::stod(f[3]), 0.0);
  }
  EXPECT_EQ(rows, r.iterations);
}
