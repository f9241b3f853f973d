#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "arachnet/error.hpp"
#include "pipeline.hpp"

using namespace arachnet;
using namespace testsupport;

namespace {

ExecutablePlan compiled(const std::string& query) {
  DeterministicBackend backend(kFixtureReferenceTime);
  auto g = analyze(query, fixture_reg(), backend);
  return compile(explore(g, fixture_reg()), fixture_reg());
}

int count(const std::string& haystack, const std::string& needle) {
  int n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("cable impact plan: four steps in dependency order") {
  auto plan = compiled(kCs1);
  REQUIRE(plan.steps.size() == 4);
  std::vector<std::string> fns;
  for (const auto& s : plan.steps) fns.push_back(s.capability_id.substr(s.capability_id.find('.') + 1));
  CHECK(fns == std::vector<std::string>{"cable_dependency_lookup", "ip_extract", "geolocate", "impact_aggregate"});
  int schema = 0, nonempty = 0;
  for (const auto& c : plan.checks) {
    schema += c.kind == QualityCheckKind::kSchema;
    nonempty += c.kind == QualityCheckKind::kNonempty;
  }
  CHECK(schema == 4);
  CHECK(nonempty == 1);
  CHECK(plan.plan_id == plan.compute_id());
  CHECK(plan.plan_schema_version == kPlanSchemaVersion);

  auto dot = export_plan(plan, ExportFormat::kDot);
  CHECK(count(dot, "->") == 3);
  CHECK(count(dot, "label=") >= 4);
  auto md = export_plan(plan, ExportFormat::kMarkdown);
  CHECK(md.find("impact_aggregate") != std::string::npos);
  CHECK(Json::parse(export_plan(plan, ExportFormat::kJson)) == to_json(plan));
  CHECK_THROWS_AS(parse_export_format("pdf"), Error);
}

TEST_CASE("steps are topologically ordered and confidence is the reliability product") {
  for (const char* q : {kCs1, kCs2, kCs3, kCs4}) {
    auto plan = compiled(q);
    INFO(q);
    std::set<std::string> seen;
    Rational product = 1;
    for (const auto& s : plan.steps) {
      for (const auto& [_, src] : s.input_bindings)
        if (src.kind == Source::Kind::kStepOutput) CHECK(seen.count(src.ref));
      seen.insert(s.id);
      if (!s.is_adapter) product *= s.reliability;
    }
    CHECK(plan.confidence == product);
    CHECK(plan.confidence <= 1);
    CHECK(executable_plan_from_json(to_json(plan)).compute_id() == plan.plan_id);
    CHECK(to_json(executable_plan_from_json(to_json(plan))) == to_json(plan));
  }
}

TEST_CASE("design edges with adapters become explicit adapter steps") {
  auto plan = compiled(kCs1);
  // Swap the extraction step for the translation adapter on the same edge.
  DeterministicBackend backend(kFixtureReferenceTime);
  auto g = analyze(kCs1, fixture_reg(), backend);
  auto design = explore(g, fixture_reg());
  auto& steps = design.chosen.steps;
  auto extract = std::find_if(steps.begin(), steps.end(),
                              [](const WorkflowStep& s) { return s.capability_id.find("ip_extract") != std::string::npos; });
  REQUIRE(extract != steps.end());
  auto lookup_ref = extract->input_bindings.begin()->second;
  auto extract_id = extract->id;
  steps.erase(extract);
  for (auto& s : steps)
    for (auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kStepOutput && src.ref == extract_id) {
        src = lookup_ref;
        src.adapters = {"extract_ips"};
      }
  for (auto& o : design.chosen.outputs)
    if (o.source.kind == Source::Kind::kStepOutput && o.source.ref == extract_id) {
      o.source = lookup_ref;
      o.source.adapters = {"extract_ips"};
    }
  auto adapted = compile(design, fixture_reg());
  const PlanStep* adapter = nullptr;
  for (const auto& s : adapted.steps)
    if (s.is_adapter) adapter = &s;
  REQUIRE(adapter != nullptr);
  CHECK(adapter->translation->adapter_id == "extract_ips");
  CHECK(adapter->input_bindings.at("in").ref == lookup_ref.ref);
  CHECK(export_plan(adapted, ExportFormat::kDot).find("dashed") != std::string::npos);
  CHECK(adapted.plan_id != plan.plan_id);
}

TEST_CASE("comparative cascade plan cross-checks independent anomaly sources") {
  auto plan = compiled(kCs3);
  std::set<std::string> frameworks;
  for (const auto& s : plan.steps)
    if (!s.is_adapter) frameworks.insert(s.framework);
  CHECK(frameworks.size() >= 4);
  bool onset = false;
  for (const auto& c : plan.checks)
    if (c.kind == QualityCheckKind::kConsistency && c.tolerance_mode == ToleranceMode::kAbsoluteSeconds) {
      onset = true;
      CHECK(c.severity == Severity::kWarn);
      CHECK(c.tolerance == kOnsetToleranceSeconds);
    }
  CHECK(onset);
}

TEST_CASE("invalid designs are rejected with the validator messages") {
  DeterministicBackend backend(kFixtureReferenceTime);
  auto design = explore(analyze(kCs1, fixture_reg(), backend), fixture_reg());
  design.chosen.steps.back().input_bindings.begin()->second.ref = "ghost";
  try {
    compile(design, fixture_reg());
    FAIL("expected CompileError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCompileError);
    bool named = false;
    for (const auto& d : e.details()) named = named || d.find("ghost") != std::string::npos;
    CHECK(named);
  }
}
