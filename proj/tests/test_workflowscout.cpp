#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "arachnet/error.hpp"
#include "arachnet/querymind.hpp"
#include "arachnet/workflowscout.hpp"
#include "planner_oracle.hpp"
#include "support.hpp"

#include <algorithm>
#include <random>

using namespace arachnet;
using namespace testsupport;

namespace {

const Registry& fixture() {
  static Registry reg = load_registry(fixture_registry());
  return reg;
}

QueryIntent intent_of(const Json& doc) { return intent_from_json(doc); }

Json cs1_intent() {
  return {{"goal_kind", "impact_table"},
          {"subject", {{"entity_type", "cable"}, {"identifiers", {"C1"}}}},
          {"aggregation", "country"},
          {"time_window", nullptr},
          {"parameters", Json::object()},
          {"classification", {{"spatial", true}, {"temporal", false}, {"causal", false}, {"data_dependency", true}}}};
}

Json cs2_intent() {
  return {{"goal_kind", "impact_table"},
          {"subject", {{"entity_type", "hazard_event"}, {"identifiers", {"earthquake", "hurricane"}}}},
          {"aggregation", "country"},
          {"time_window", nullptr},
          {"parameters", {{"failure_probability", "1/10"}}},
          {"classification", {{"spatial", true}, {"temporal", false}, {"causal", false}, {"data_dependency", false}}}};
}

Json cs3_intent() {
  return {{"goal_kind", "cascade_timeline"},
          {"subject", {{"entity_type", "region_pair"}, {"identifiers", {"Europe", "Asia"}}}},
          {"aggregation", "asn"},
          {"time_window", {{"start", "2024-03-05T00:00:00Z"}, {"end", "2024-03-08T00:00:00Z"}}},
          {"parameters", Json::object()},
          {"classification", {{"spatial", true}, {"temporal", true}, {"causal", true}, {"data_dependency", true}}}};
}

Json cs4_intent() {
  return {{"goal_kind", "ranked_cable_table"},
          {"subject", {{"entity_type", "region_pair"}, {"identifiers", {"Europe", "Asia"}}}},
          {"aggregation", "cable"},
          {"time_window", {{"start", "2024-03-05T00:00:00Z"}, {"end", "2024-03-08T00:00:00Z"}}},
          {"parameters", Json::object()},
          {"classification", {{"spatial", true}, {"temporal", true}, {"causal", true}, {"data_dependency", true}}}};
}

std::vector<std::string> chain(const CandidateWorkflow& c) {
  std::vector<std::string> out;
  for (const auto& s : c.steps) out.push_back(s.capability_id);
  return out;
}

}  // namespace

TEST_CASE("cable impact explores directly into the four-step chain") {
  auto graph = expand(intent_of(cs1_intent()), fixture());
  auto design = explore(graph, fixture());
  CHECK(design.exploration_mode == ExplorationMode::kDirect);
  CHECK(design.alternatives.empty());
  std::vector<std::string> names;
  for (const auto& s : design.chosen.steps) names.push_back(fixture().find(s.capability_id)->function_name());
  CHECK(names == std::vector<std::string>{"cable_dependency_lookup", "ip_extract", "geolocate", "impact_aggregate"});
  CHECK(validate_design(design, fixture()).valid());
  auto dot = candidate_to_dot(design.chosen);
  CHECK(std::count(dot.begin(), dot.end(), '>') == 3);
}

TEST_CASE("hazard impact uses only hazard processing and combine") {
  auto graph = expand(intent_of(cs2_intent()), fixture());
  auto design = explore(graph, fixture());
  std::set<std::string> ids;
  for (const auto& s : design.chosen.steps) ids.insert(s.capability_id);
  CHECK(ids == std::set<std::string>{"xaminer.hazard_event_process", "xaminer.impact_combine"});
  CHECK(design.chosen.steps.size() == 3);
  for (const auto& s : design.chosen.steps) {
    if (s.capability_id == "xaminer.hazard_event_process") {
      CHECK(s.params.at("failure_probability") == "1/10");
      CHECK((s.params.at("hazard_type") == "earthquake" || s.params.at("hazard_type") == "hurricane"));
    }
  }
  CHECK(validate_design(design, fixture()).valid());
}

TEST_CASE("cascade plan spans several frameworks and goes comparative") {
  auto graph = expand(intent_of(cs3_intent()), fixture());
  auto design = explore(graph, fixture());
  std::set<std::string> frameworks;
  for (const auto& s : design.chosen.steps) frameworks.insert(fixture().find(s.capability_id)->framework);
  CHECK(frameworks.size() >= 4);
  CHECK(design.exploration_mode == ExplorationMode::kComparative);
  CHECK(validate_design(design, fixture()).valid());
  for (const auto& alt : design.alternatives) CHECK(alt.capability_multiset() != design.chosen.capability_multiset());
}

TEST_CASE("forensics plan ends in the suspect ranking") {
  auto graph = expand(intent_of(cs4_intent()), fixture());
  auto design = explore(graph, fixture());
  auto ids = chain(design.chosen);
  CHECK(std::find(ids.begin(), ids.end(), "xaminer.suspect_cable_rank") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "atlas.anomaly_detect") != ids.end());
  CHECK(validate_design(design, fixture()).valid());
}

TEST_CASE("explore is deterministic") {
  for (const auto& doc : {cs1_intent(), cs2_intent(), cs3_intent(), cs4_intent()}) {
    auto graph = expand(intent_of(doc), fixture());
    auto a = to_json(explore(graph, fixture())).dump();
    auto b = to_json(explore(graph, fixture())).dump();
    CHECK(a == b);
  }
}

TEST_CASE("design documents round-trip") {
  auto design = explore(expand(intent_of(cs3_intent()), fixture()), fixture());
  auto doc = to_json(design);
  CHECK(to_json(workflow_design_from_json(doc)) == doc);
  doc["chosen"]["steps"][0]["bogus"] = 1;
  try {
    workflow_design_from_json(doc);
    FAIL("expected schema violation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchemaViolation);
    CHECK(std::string(e.what()).find("stage2.chosen.steps[0]") != std::string::npos);
  }
}

TEST_CASE("validation reports cycles, unbound ports and incompatible kinds") {
  auto design = explore(expand(intent_of(cs1_intent()), fixture()), fixture());
  auto& steps = design.chosen.steps;

  SUBCASE("cycle") {
    // Feed the first step from the last one.
    auto first = steps.front();
    steps.front().input_bindings.begin()->second = Source::step(steps.back().id, "impact");
    auto report = validate_design(design, fixture());
    bool found = false;
    for (const auto& v : report.violations) {
      if (v.kind != "cycle") continue;
      found = true;
      CHECK(std::find(v.steps.begin(), v.steps.end(), first.id) != v.steps.end());
    }
    CHECK(found);
  }
  SUBCASE("unbound") {
    steps.back().input_bindings.clear();
    auto report = validate_design(design, fixture());
    REQUIRE_FALSE(report.valid());
    CHECK(report.violations.front().kind == "unbound-port");
  }
  SUBCASE("unknown capability") {
    steps.back().capability_id = "nope.nothing";
    auto report = validate_design(design, fixture());
    CHECK(std::any_of(report.violations.begin(), report.violations.end(),
                      [](const Violation& v) { return v.kind == "unknown-capability"; }));
  }
  SUBCASE("duplicate alternative") {
    design.alternatives.push_back(design.chosen);
    auto report = validate_design(design, fixture());
    CHECK(std::any_of(report.violations.begin(), report.violations.end(),
                      [](const Violation& v) { return v.kind == "duplicate-alternative"; }));
  }
}

TEST_CASE("missing capability yields NoPlan with blocking kinds") {
  TempDir dir;
  write_registry(dir.path(), {"a", "b", "c", "d"},
                 {capability("x.ab", {"a"}, {"b"}), capability("x.dc", {"d"}, {"c"})});
  auto reg = load_registry(dir.path());
  try {
    plan_for_kind(DataKindSpec{"c", DataFormat::kTable, ""}, reg, {DataKindSpec{"a", DataFormat::kTable, ""}});
    FAIL("expected NoPlan");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoPlan);
    CHECK(std::find(e.details().begin(), e.details().end(), "d") != e.details().end());
  }
}

TEST_CASE("planner prefers the cheaper path through translations") {
  TempDir dir;
  write_registry(dir.path(), {"a", "b", "b2", "c"},
                 {capability("x.ab", {"a"}, {"b"}, "5"), capability("y.ab2", {"a"}, {"b2"}, "1"),
                  capability("z.bc", {"b"}, {"c"}, "1")},
                 {translation("b2", "b", "b2_to_b", "1")});
  auto reg = load_registry(dir.path());
  auto plan = plan_for_kind(*reg.spec_for_kind("c"), reg, {*reg.spec_for_kind("a")});
  CHECK(plan.score.compute_cost == 3);
  CHECK(chain(plan) == std::vector<std::string>{"y.ab2", "z.bc"});
  CHECK(plan.steps[1].input_bindings.at("in0").adapters == std::vector<std::string>{"b2_to_b"});
}

TEST_CASE("planner cost equals brute-force minimum over random registries") {
  std::mt19937_64 rng(20240308);
  int solved = 0;
  for (int trial = 0; trial < 300; ++trial) {
    TempDir dir;
    auto scenario = oracle::random_scenario(rng);
    oracle::write(scenario, dir.path());
    auto reg = load_registry(dir.path());
    auto expected = oracle::min_cost(scenario, reg, 6);
    std::optional<CandidateWorkflow> plan;
    try {
      plan = plan_for_kind(*reg.spec_for_kind(scenario.goal), reg, oracle::available_specs(scenario, reg));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNoPlan);
    }
    INFO("trial " << trial);
    if (!plan) {
      CHECK_FALSE(expected.has_value());
      continue;
    }
    ++solved;
    CHECK(validate_candidate(*plan, reg).valid());
    CHECK(oracle::plan_cost(*plan, reg) == plan->score.compute_cost);
    if (plan->steps.size() <= 6) {
      REQUIRE(expected.has_value());
      CHECK(plan->score.compute_cost == *expected);
    } else if (expected) {
      CHECK(plan->score.compute_cost <= *expected);
    }
  }
  CHECK(solved > 100);
}
