#include <gtest/gtest.h>

#include "canard/config.hpp"

using namespace canard;

namespace {

json minimal() {
  return json::parse(R"({
    "schema_version": 1,
    "system": {"kind": "reduced", "params": {"alpha": 2.0, "epsilon": 0.01}},
    "initial_state": {"x": 0.8, "y": 28.0},
    "integration": {"method": "rk4", "dt": 0.001, "t_end": 1.0}
  })");
}

std::string error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, DefaultsAreExpanded) {
  const RunConfig c = parse_config(minimal());
  const auto& p = std::get<DecisionParamsReduced>(c.system);
  EXPECT_EQ(p.beta, 0.75);
  EXPECT_EQ(p.d, 1.18);
  EXPECT_EQ(c.integration->method, Method::rk4_fixed);
  const json out = to_json(c);
  EXPECT_EQ(out["system"]["params"]["beta"], 0.75);
  EXPECT_EQ(out["integration"]["rtol"], 1e-8);
  EXPECT_EQ(out["fold_search"]["y_hi"], 60.0);
}

TEST(Config, ResolvedConfigRoundTrips) {
  json j = minimal();
  j["controller"] = json::parse(R"({"mode": "fast_only", "targets": ["leftmost", 1,
      {"x": 0.6, "y": 28.6, "a_c": 1.6, "b_c": 0.1}],
      "schedule": [{"time": 0.5, "mode": "off"}]})");
  j["plant_perturbation"] = {{"beta", 0.05}};
  const RunConfig a = parse_config(j);
  const json ja = to_json(a);
  const RunConfig b = parse_config(ja);
  EXPECT_EQ(to_json(b), ja);
  EXPECT_EQ(std::get<DecisionParamsReduced>(b.plant()).beta, 0.8);
}

TEST(Config, AcceptsRunJsonWrapper) {
  const json run = {{"command", "simulate"}, {"config", to_json(parse_config(minimal()))}};
  EXPECT_NO_THROW(parse_config(run));
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  json j = minimal();
  j["integrator"] = json::object();
  EXPECT_EQ(error_path(j), "integrator");
  j = minimal();
  j["system"]["params"]["alpah"] = 1.0;
  EXPECT_EQ(error_path(j), "system.params.alpah");
  j = minimal();
  j["controller"] = json::parse(R"({"schedule": [{"time": 1.0, "mode": "off", "tagret": 0}]})");
  EXPECT_EQ(error_path(j), "controller.schedule[0].tagret");
}

TEST(Config, TypeAndRangeErrorsNameTheField) {
  json j = minimal();
  j["integration"]["dt"] = "small";
  EXPECT_EQ(error_path(j), "integration.dt");
  j = minimal();
  j["system"]["params"]["d"] = 1.0;
  EXPECT_EQ(error_path(j), "params.d");
  j = minimal();
  j["integration"]["method"] = "euler";
  EXPECT_EQ(error_path(j), "integration.method");
  j = minimal();
  j.erase("schema_version");
  EXPECT_EQ(error_path(j), "schema_version");
  j = minimal();
  j["schema_version"] = 2;
  EXPECT_EQ(error_path(j), "schema_version");
  j = minimal();
  j["system"]["kind"] = "logistic";
  EXPECT_EQ(error_path(j), "system.kind");
  j = minimal();
  j["plant_perturbation"] = {{"zeta", 0.1}};
  EXPECT_EQ(error_path(j), "plant_perturbation.zeta");
  j = minimal();
  j["controller"] = json::parse(R"({"targets": ["middle"]})");
  EXPECT_EQ(error_path(j), "controller.targets[0]");
}

TEST(Config, NormalFormDefaults) {
  const json j = json::parse(R"({"schema_version": 1,
      "system": {"kind": "perturbed_normal_form",
                 "params": {"a_c": 2.0, "b_c": 3.0, "k": 2, "delta_a": 0.1, "delta_b": 0.5}}})");
  const RunConfig c = parse_config(j);
  const auto& p = std::get<PerturbedNormalForm>(c.system);
  EXPECT_EQ(p.nf.sigma, 1);
  EXPECT_EQ(p.pert.delta_b, 0.5);
  EXPECT_EQ(*c.manifold.x_lo, -1.0);
  EXPECT_EQ(c.fold_search.y_lo, -10.0);
}

TEST(Config, SweepNeedsTheReducedModel) {
  json j = json::parse(R"({"schema_version": 1,
      "system": {"kind": "normal_form", "params": {}},
      "sweep": {"x": {"param": "alpha", "lo": 0, "hi": 1}, "y": {"param": "beta", "lo": 0, "hi": 1}}})");
  EXPECT_EQ(error_path(j), "sweep");
  j["system"] = {{"kind", "reduced"}};
  const RunConfig c = parse_config(j);
  EXPECT_EQ(c.sweep->x.n, 60u);
  j["sweep"]["x"]["param"] = "zeta";
  EXPECT_EQ(error_path(j), "sweep.param");
}
