#include <cmath>

#include <gtest/gtest.h>

#include "canard/dynamics.hpp"
#include "canard/integrator.hpp"

using namespace canard;

namespace {

State oscillator(double, State s) { return {s.y, -s.x}; }

double rk4_error(double dt) {
  IntegrationConfig cfg;
  cfg.dt = dt;
  cfg.t_end = 2.0 * M_PI;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  const State e = tr.states.back();
  return std::hypot(e.x - 1.0, e.y);
}

}  // namespace

TEST(Rk4, HarmonicOscillatorFourthOrder) {
  const double e1 = rk4_error(0.02);
  const double e2 = rk4_error(0.01);
  const double order = std::log2(e1 / e2);
  EXPECT_NEAR(order, 4.0, 0.1);
  EXPECT_LT(e2, 1e-8);
}

TEST(Rk4, EndsExactlyAtTEnd) {
  IntegrationConfig cfg;
  cfg.dt = 0.3;
  cfg.t_end = 1.0;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  ASSERT_TRUE(tr.ok());
  EXPECT_EQ(tr.times.front(), 0.0);
  EXPECT_EQ(tr.times.back(), 1.0);
  EXPECT_EQ(tr.size(), 5u);
}

TEST(Rk4, SampleStrideKeepsEndpoint) {
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 1.0;
  cfg.sample_stride = 7;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  EXPECT_EQ(tr.times.back(), 1.0);
  EXPECT_EQ(tr.size(), 1u + 100u / 7u + 1u);
}

TEST(Rk45, MeetsTolerance) {
  IntegrationConfig cfg;
  cfg.method = Method::rk45_adaptive;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  cfg.t_end = 20.0 * M_PI;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  ASSERT_TRUE(tr.ok());
  EXPECT_EQ(tr.times.back(), cfg.t_end);
  EXPECT_NEAR(tr.states.back().x, 1.0, 1e-8);
  EXPECT_NEAR(tr.states.back().y, 0.0, 1e-8);
}

TEST(Integrate, ZeroLengthRunIsEmpty) {
  IntegrationConfig cfg;
  cfg.t_end = 0.0;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  EXPECT_TRUE(tr.ok());
  EXPECT_EQ(tr.size(), 0u);
}

TEST(Integrate, InvalidConfigThrows) {
  IntegrationConfig cfg;
  cfg.dt = -1.0;
  EXPECT_THROW(integrate(oscillator, {1.0, 0.0}, cfg), ConfigError);
  cfg = {};
  cfg.t_end = -1.0;
  EXPECT_THROW(integrate(oscillator, {1.0, 0.0}, cfg), ConfigError);
  cfg = {};
  EXPECT_THROW(integrate(oscillator, {NAN, 0.0}, cfg), ConfigError);
}

TEST(Integrate, BlowUpReportsNonFinite) {
  IntegrationConfig cfg;
  cfg.dt = 0.1;
  cfg.t_end = 10.0;
  const auto blowup = [](double, State s) { return State{s.x * s.x, 0.0}; };
  const Trajectory tr = integrate(blowup, {10.0, 0.0}, cfg);
  EXPECT_FALSE(tr.ok());
  EXPECT_EQ(tr.status, IntegrationStatus::non_finite);
  ASSERT_GT(tr.size(), 0u);
  EXPECT_TRUE(tr.states.back().finite());
  ASSERT_FALSE(tr.events.empty());
  EXPECT_EQ(tr.events.back().kind, "non_finite");
}

TEST(Integrate, PoleIsReportedWithPartialOutput) {
  DecisionParamsReduced p;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 10.0;
  const auto toward_pole = [&](double, State s) {
    (void)eval_reduced(s, p);
    return State{1.0, 0.0};
  };
  const Trajectory tr = integrate(toward_pole, {1.0, 20.0}, cfg);
  EXPECT_EQ(tr.status, IntegrationStatus::pole_error);
  EXPECT_GT(tr.size(), 1u);
}

TEST(Integrate, BreakpointsFireInOrderAndAdaptiveLandsOnThem) {
  IntegrationConfig cfg;
  cfg.method = Method::rk45_adaptive;
  cfg.t_end = 5.0;
  std::vector<double> fired;
  Hooks hooks;
  hooks.breakpoints = {1.0, 2.5, 4.0};
  hooks.on_breakpoint = [&](double t, std::size_t i) {
    EXPECT_EQ(i, fired.size());
    fired.push_back(t);
  };
  integrate(oscillator, {1.0, 0.0}, cfg, hooks);
  ASSERT_EQ(fired.size(), 3u);
  EXPECT_DOUBLE_EQ(fired[0], 1.0);
  EXPECT_DOUBLE_EQ(fired[1], 2.5);
  EXPECT_DOUBLE_EQ(fired[2], 4.0);
}

TEST(Integrate, ObserverFillsExtrasPerSample) {
  IntegrationConfig cfg;
  cfg.dt = 0.1;
  cfg.t_end = 1.0;
  Hooks hooks;
  hooks.observe = [](double t, const State&) {
    SampleExtras x;
    x.u = t;
    return x;
  };
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg, hooks);
  ASSERT_EQ(tr.extras.size(), tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(*tr.extras[i].u, tr.times[i]);
}

TEST(Integrate, MaxStepsStopsTheRun) {
  IntegrationConfig cfg;
  cfg.method = Method::rk45_adaptive;
  cfg.dt_max = 1e-3;
  cfg.t_end = 10.0;
  cfg.max_steps = 100;
  const Trajectory tr = integrate(oscillator, {1.0, 0.0}, cfg);
  EXPECT_EQ(tr.status, IntegrationStatus::max_steps);
}

TEST(Layer, FrozenSlowVariable) {
  DecisionParamsReduced p;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 50.0;
  const Trajectory tr =
      integrate_layer([&](double x, double y) { return eval_reduced({x, y}, p).x; }, {0.3, 28.0}, cfg);
  ASSERT_TRUE(tr.ok());
  EXPECT_EQ(tr.states.back().y, 28.0);
  EXPECT_NEAR(eval_reduced(tr.states.back(), p).x, 0.0, 1e-8);
}
