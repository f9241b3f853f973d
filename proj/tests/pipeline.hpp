#pragma once

// Query -> executed plan, in memory, for tests.

#include "arachnet/backend.hpp"
#include "arachnet/executor.hpp"
#include "arachnet/runinputs.hpp"
#include "arachnet/solutionweaver.hpp"
#include "support.hpp"

#include <algorithm>
#include <functional>
#include <memory>

namespace testsupport {

inline const arachnet::Registry& fixture_reg() {
  static arachnet::Registry reg = arachnet::load_registry(fixture_registry());
  return reg;
}

inline std::shared_ptr<const arachnet::toolsim::FixtureDataset> fixture_ds() {
  static auto ds =
      std::make_shared<const arachnet::toolsim::FixtureDataset>(arachnet::toolsim::FixtureDataset::load(fixture_topo()));
  return ds;
}

inline arachnet::AdapterSet fixture_adapters() {
  arachnet::AdapterSet set;
  set.add(std::make_shared<arachnet::toolsim::ToolSimAdapter>(fixture_ds()));
  return set;
}

inline const char* const kCs1 = "Identify the impact at a country level due to SeaMeWe-5 cable failure";
inline const char* const kCs2 =
    "Identify the impact of severe earthquakes and hurricanes globally assuming a 10% infra failure probability";
inline const char* const kCs3 = "Analyze the cascading effects of submarine cable failures between Europe and Asia";
inline const char* const kCs4 =
    "A sudden increase in latency was observed from European probes to Asian destinations starting three days ago. "
    "Determine if a submarine cable failure caused this, and if so, identify the specific cable.";

struct Pipeline {
  arachnet::SubProblemGraph graph;
  arachnet::WorkflowDesign design;
  arachnet::ExecutablePlan plan;
  std::map<std::string, arachnet::DataValue> inputs;
  arachnet::MemoryBlobStore blobs;
  arachnet::ExecutionResult result;

  arachnet::DataValue output(const std::string& step_port) const {
    return arachnet::load_value(blobs, result.step_outputs.at(step_port).digest);
  }
};

// Replaces the step running `capability` with the translation `adapter_id`
// applied on its input edge.
inline arachnet::WorkflowDesign bypass_with_adapter(arachnet::WorkflowDesign design, const std::string& capability,
                                                    const std::string& adapter_id) {
  using arachnet::Source;
  auto& steps = design.chosen.steps;
  auto it = std::find_if(steps.begin(), steps.end(),
                         [&](const arachnet::WorkflowStep& s) { return s.capability_id == capability; });
  if (it == steps.end()) return design;
  auto upstream = it->input_bindings.begin()->second;
  upstream.adapters.push_back(adapter_id);
  auto removed = it->id;
  steps.erase(it);
  auto rewire = [&](Source& src) {
    if (src.kind == Source::Kind::kStepOutput && src.ref == removed) src = upstream;
  };
  for (auto& s : steps)
    for (auto& [_, src] : s.input_bindings) rewire(src);
  for (auto& o : design.chosen.outputs) rewire(o.source);
  return design;
}

inline std::unique_ptr<Pipeline> run_query(
    const std::string& query, bool parallel = false,
    const std::function<arachnet::WorkflowDesign(arachnet::WorkflowDesign)>& edit = {}) {
  auto p = std::make_unique<Pipeline>();
  arachnet::DeterministicBackend backend(arachnet::kFixtureReferenceTime);
  p->graph = arachnet::analyze(query, fixture_reg(), backend);
  p->design = arachnet::explore(p->graph, fixture_reg());
  if (edit) p->design = edit(p->design);
  p->plan = arachnet::compile(p->design, fixture_reg());
  p->inputs = arachnet::materialize_run_inputs(p->graph.intent, fixture_reg(), *fixture_ds());
  arachnet::FixedClock clock(0, 1);
  arachnet::ExecutorOptions opts;
  opts.parallel = parallel;
  opts.clock = &clock;
  p->result = arachnet::execute(p->plan, fixture_adapters(), p->inputs, p->blobs, opts);
  return p;
}

// Independent join over the raw fixture files: cable set -> per-country
// fraction of geolocated IPs hit.
inline std::map<std::string, arachnet::Rational> impact_oracle(const std::set<std::string>& cables) {
  using arachnet::Rational;
  auto raw = [](const char* name) { return arachnet::read_json_file(fixture_topo() / name); };
  std::map<std::string, std::string> country_of;
  std::map<std::string, int> footprint;
  for (const auto& g : raw("geoip.json")) {
    country_of[g["ip"]] = g["country"];
    ++footprint[g["country"]];
  }
  std::map<std::string, std::set<std::string>> hit;
  for (const auto& l : raw("ip_links.json")) {
    if (!cables.count(l["cable_id"])) continue;
    for (const char* side : {"ip_a", "ip_b"}) {
      std::string ip = l[side];
      hit[country_of.at(ip)].insert(ip);
    }
  }
  std::map<std::string, Rational> out;
  for (const auto& [c, ips] : hit) out[c] = Rational(static_cast<int>(ips.size()), footprint[c]);
  return out;
}

inline std::map<std::string, arachnet::Rational> impact_rows(const Json& payload, const std::string& key = "country") {
  std::map<std::string, arachnet::Rational> out;
  for (const auto& row : payload) out[row.at(key).get<std::string>()] = arachnet::parse_rational(row.at("impact").get<std::string>());
  return out;
}

}  // namespace testsupport
