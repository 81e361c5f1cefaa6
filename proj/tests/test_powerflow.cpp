#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dopf/bfm.hpp"
#include "dopf/powerflow.hpp"
#include "fixtures.hpp"

using namespace dopf;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

FeederGraph two_bus() { return load_feeder(testdata::test_path("two_bus.feeder")); }

}  // namespace

TEST(Sweep, ZeroLoadKeepsSlackPhasors) {
  const FeederGraph g = load_feeder(testdata::test_path("zero_load.feeder"));
  const PhasorSolution s = sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g));
  for (int i = 0; i < g.num_buses(); ++i)
    for (int p : g.bus(i).phases.phases()) EXPECT_LT(std::abs(s.V[i][p] - std::polar(1.0, nominal_phase_angle(p))), 1e-15);
  for (int e = 0; e < g.num_branches(); ++e)
    for (int p = 0; p < 3; ++p) EXPECT_EQ(s.I[e][p], cd(0.0));
  for (int p = 0; p < 3; ++p) EXPECT_EQ(s.S_sub[p], cd(0.0));
}

TEST(Sweep, TwoBusMatchesClosedFormQuartic) {
  // |V2|^4 + (2(pr + qx) - |V1|^2)|V2|^2 + (p^2 + q^2)(r^2 + x^2) = 0, upper root.
  const double r = 0.01, x = 0.01, p = 0.1, q = 0.05, v1 = 1.0;
  const double b = 2.0 * (p * r + q * x) - v1 * v1;
  const double c = (p * p + q * q) * (r * r + x * x);
  const double v2sq = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;

  const FeederGraph g = two_bus();
  const PhasorSolution s = sweep_powerflow(g, LoadModel::ConstantPower, Dispatch::zero(g));
  EXPECT_NEAR(std::norm(s.V[1][0]), v2sq, 1e-12);
  EXPECT_NEAR(std::abs(s.V[1][0]), 0.9984976177, 1e-9);
  EXPECT_LT(s.mismatch, 1e-9);
}

TEST(Sweep, PowerBalancePerPhase) {
  for (const auto& name : testdata::bundled()) {
    SCOPED_TRACE(name);
    const FeederGraph g = testdata::load(name);
    Dispatch d = Dispatch::zero(g);
    for (int i = 0; i < g.num_buses(); ++i)
      if (g.bus(i).dg)
        for (int p : g.bus(i).dg->phases.phases()) d(i, p) = 0.5 * g.bus(i).dg->q_limit(p);
    const PhasorSolution s = sweep_powerflow(g, LoadModel::Cvr, d);
    std::array<cd, 3> expect{};
    for (int i = 0; i < g.num_buses(); ++i) {
      const Bus& b = g.bus(i);
      if (b.load)
        for (int p : b.load->phases.phases()) expect[p] += load_power(*b.load, p, LoadModel::Cvr, s.V[i][p]);
      if (b.dg)
        for (int p : b.dg->phases.phases()) expect[p] -= cd(b.dg->p_out[p], d(i, p));
    }
    for (int e = 0; e < g.num_branches(); ++e) {
      const Branch& br = g.branch(e);
      for (int p : br.phases.phases()) expect[p] += (s.V[br.from][p] - s.V[br.to][p]) * std::conj(s.I[e][p]);
    }
    for (int p = 0; p < 3; ++p) EXPECT_LT(std::abs(s.S_sub[p] - expect[p]), 1e-8) << p;
  }
}

TEST(Sweep, NonConvergenceReportsMismatch) {
  const FeederGraph g = testdata::load("ieee13.feeder");
  SweepOptions opt;
  opt.max_sweeps = 2;
  try {
    sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g), opt);
    FAIL() << "converged in two sweeps";
  } catch (const SweepError& e) {
    EXPECT_EQ(e.kind(), SweepError::Kind::NotConverged);
    EXPECT_EQ(e.sweeps(), 2);
    EXPECT_GT(e.mismatch(), 1e-9);
  }
}

TEST(Sweep, HeavyLoadCollapses) {
  const FeederGraph g = scale_loads(testdata::load("4bus.feeder"), 200.0);
  try {
    sweep_powerflow(g, LoadModel::ConstantPower, Dispatch::zero(g));
    FAIL() << "no collapse";
  } catch (const SweepError& e) {
    EXPECT_EQ(e.kind(), SweepError::Kind::Diverged);
  }
}

TEST(Sweep, RejectsDispatchWithoutDg) {
  const FeederGraph g = testdata::load("4bus.feeder");
  Dispatch d = Dispatch::zero(g);
  d(2, 1) = 0.01;
  EXPECT_THROW(sweep_powerflow(g, LoadModel::Cvr, d), ModelError);
  EXPECT_THROW(sweep_powerflow(g, LoadModel::Cvr, Dispatch(2)), DimensionMismatch);
}

TEST(AngleTableTest, AntisymmetricOnEveryFixture) {
  for (const auto& name : testdata::bundled()) {
    const FeederGraph g = testdata::load(name);
    const AngleTable t = extract_angle_table(g);
    for (int e = 0; e < g.num_branches(); ++e)
      for (auto [p, q] : g.branch(e).phases.pairs()) EXPECT_EQ(t(e, p, q), -t(e, q, p));
  }
}

TEST(AngleTableTest, FourBusEqualsSweepCurrentArguments) {
  const FeederGraph g = testdata::load("4bus.feeder");
  const PhasorSolution s = sweep_powerflow(g, LoadModel::ConstantImpedance, Dispatch::zero(g));
  const AngleTable t = extract_angle_table(g);
  for (int e = 0; e < g.num_branches(); ++e)
    for (auto [p, q] : g.branch(e).phases.pairs()) {
      const double d = std::remainder(std::arg(s.I[e][p]) - std::arg(s.I[e][q]), 2.0 * std::numbers::pi);
      EXPECT_NEAR(t(e, p, q), d, 1e-12);
      EXPECT_FALSE(t.fallback(e));
    }
}

TEST(AngleTableTest, BalancedFeederSeparatesBy120) {
  const FeederGraph g = testdata::load("balanced3.feeder");
  const AngleTable t = extract_angle_table(g);
  for (int e = 0; e < g.num_branches(); ++e) {
    EXPECT_NEAR(t(e, 0, 1), 120.0 * kDeg, 1e-6);
    EXPECT_NEAR(t(e, 0, 2), -120.0 * kDeg, 1e-6);
    EXPECT_NEAR(t(e, 1, 2), 120.0 * kDeg, 1e-6);
  }
  const PhasorSolution s = sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g));
  EXPECT_LT(max_voltage_angle_deviation(g, s), 1e-6);
}

TEST(AngleTableTest, UnbalancedDeviationIsFinite) {
  for (const char* name : {"4bus.feeder", "ieee13.feeder"}) {
    const FeederGraph g = testdata::load(name);
    const PhasorSolution s = sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g));
    const double dev = max_voltage_angle_deviation(g, s);
    EXPECT_TRUE(std::isfinite(dev));
    EXPECT_GT(dev, 0.0);
    EXPECT_LT(dev, 5.0 * kDeg);
  }
}

TEST(AngleTableTest, ZeroCurrentFallsBackToNominal) {
  const FeederGraph g = load_feeder(testdata::test_path("zero_load.feeder"));
  const AngleTable t = extract_angle_table(g);
  for (int e = 0; e < g.num_branches(); ++e) {
    EXPECT_TRUE(t.fallback(e));
    for (auto [p, q] : g.branch(e).phases.pairs()) {
      const double nominal = std::remainder(nominal_phase_angle(p) - nominal_phase_angle(q), 2.0 * std::numbers::pi);
      EXPECT_NEAR(t(e, p, q), nominal, 1e-15);
    }
  }
}

TEST(Validate, ZeroDispatchHasNoViolations) {
  for (const auto& name : testdata::bundled()) {
    const FeederGraph g = testdata::load(name);
    const auto v = validate_dispatch(g, Dispatch::zero(g));
    EXPECT_TRUE(v.violations.empty()) << name;
    EXPECT_GT(v.substation_power_mw, 0.0);
  }
}

TEST(Validate, ReactiveAbsorptionAtFeederEndLowersPower) {
  // With cvr_p = 2 the voltage-dependent demand dominates the loss change.
  const FeederGraph g = testdata::load("4bus_dg.feeder");
  const int bus = *g.find_bus("4");
  const double base = validate_dispatch(g, Dispatch::zero(g)).substation_power_mw;
  Dispatch absorb = Dispatch::zero(g), inject = Dispatch::zero(g);
  absorb(bus, 0) = -0.005;
  inject(bus, 0) = 0.005;
  EXPECT_LT(validate_dispatch(g, absorb).substation_power_mw, base);
  EXPECT_GT(validate_dispatch(g, inject).substation_power_mw, base);
}

TEST(Validate, FlagsVoltageAndAmpacity) {
  const FeederGraph g = testdata::load("4bus.feeder");
  ValidationLimits lim;
  lim.v_min = 0.99;
  const auto v = validate_dispatch(g, Dispatch::zero(g), {}, lim);
  ASSERT_FALSE(v.violations.empty());
  for (const auto& x : v.violations) {
    EXPECT_EQ(x.kind, Violation::Kind::VoltageLow);
    EXPECT_LT(x.value, 0.99 - 1e-4);
  }
  const FeederGraph heavy = scale_loads(g, 4.0);
  const auto h = validate_dispatch(heavy, Dispatch::zero(heavy), {}, {0.0, 2.0, 1e-4});
  bool amp = false;
  for (const auto& x : h.violations) amp |= x.kind == Violation::Kind::Ampacity;
  EXPECT_TRUE(amp);
}

TEST(ErrorReport, SelfComparisonIsZero) {
  const FeederGraph g = testdata::load("ieee13_dg.feeder");
  const ConstraintSystem sys = build_constraints(g, extract_angle_table(g));
  const PhasorSolution s = sweep_powerflow(g, LoadModel::Cvr, Dispatch::zero(g));
  const OperatingPoint x = map_phasor_solution(g, sys, s, Dispatch::zero(g));
  const auto r = approximation_error_report(g, x, s);
  EXPECT_LT(r.max_flow_error_pct, 1e-10);
  EXPECT_LT(r.max_voltage_error, 1e-12);
}

TEST(SolutionDump, FieldNames) {
  const FeederGraph g = two_bus();
  const auto j = solution_to_json(g, sweep_powerflow(g, LoadModel::ConstantPower, Dispatch::zero(g)));
  ASSERT_EQ(j["buses"].size(), 2u);
  EXPECT_EQ(j["buses"][1]["bus"], "l");
  EXPECT_EQ(j["buses"][1]["phase"], "a");
  EXPECT_TRUE(j["buses"][1].contains("v_mag_pu"));
  EXPECT_TRUE(j["buses"][1].contains("v_ang_deg"));
  ASSERT_EQ(j["branches"].size(), 1u);
  for (const char* k : {"from", "to", "phase", "p_pu", "q_pu", "i_mag_pu", "i_ang_deg"})
    EXPECT_TRUE(j["branches"][0].contains(k)) << k;
  EXPECT_NEAR(j["substation"][0]["p_pu"].get<double>(), 0.1 + 0.0125 * 0.01 / (0.9984976177 * 0.9984976177), 1e-9);
}
