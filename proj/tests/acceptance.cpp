// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include "arachnet/curator.hpp"
#include "arachnet/error.hpp"
#include "arachnet/orchestrator.hpp"
#include "mock_stages.hpp"
#include "pipeline.hpp"
#include "planner_oracle.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <iostream>
#include <sstream>

using namespace arachnet;
using namespace testsupport;

namespace {

// Collects failed expectations for one criterion.
struct Verdict {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  bool expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
    return ok;
  }
  void note(const std::string& n) { notes.push_back(n); }
};

struct Home {
  TempDir dir;
  FixedClock clock{1'700'000'000'000, 1};
  RegistryStore registry{dir.path() / "registry"};
  FsRunStore runs{dir.path() / "runs"};
  std::unique_ptr<ArachnetStages> stages;
  std::unique_ptr<Orchestrator> orch;

  explicit Home(PipelineConfig config = {}) {
    registry.initialize_from(fixture_registry());
    std::shared_ptr<PlannerBackend> backend = make_backend(config.backend);
    stages = std::make_unique<ArachnetStages>(registry, backend, config, &clock);
    orch = std::make_unique<Orchestrator>(runs, *stages, clock, [this] { return registry.latest_version(); }, 7);
  }

  ExecutionResult result(const std::string& id) const {
    return execution_result_from_json(*runs.get_document(id, kResultDocument));
  }
};

std::string cable_query(const std::string& cable) {
  return "Identify the impact at a country level due to " + cable + " cable failure";
}

std::string function_of(const std::string& capability_id) {
  return fixture_reg().find(capability_id)->function_name();
}

std::string port_of(const Pipeline& p, const std::string& function) {
  for (const auto& s : p.plan.steps)
    if (fixture_reg().find(s.capability_id) && function_of(s.capability_id) == function)
      return s.id + "." + s.outputs.at(0).name;
  return {};
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

// --- 1 ----------------------------------------------------------------------

void cable_impact(Verdict& v) {
  auto start = std::chrono::steady_clock::now();
  auto p = run_query(kCs1);
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::vector<std::string> chain;
  for (const auto& s : p->plan.steps) chain.push_back(function_of(s.capability_id));
  v.expect(chain == std::vector<std::string>{"cable_dependency_lookup", "ip_extract", "geolocate", "impact_aggregate"},
           "chain is " + join(chain, " -> "));
  if (!v.expect(p->result.success, "execution failed: " + p->result.reason)) return;
  auto table = impact_rows(p->output(port_of(*p, "impact_aggregate")).payload);
  v.expect(!table.empty() && table == impact_oracle({"C1"}), "impact_table differs from the raw join oracle");
  v.expect(elapsed < 5.0, "took " + str(elapsed) + "s");
  v.note(str(table.size()) + " countries, " + str(static_cast<int>(elapsed * 1000)) + " ms");
}

// --- 2 ----------------------------------------------------------------------

// Independent goal test for a subset of steps: every binding resolves inside
// the subset, and each sub-problem is solved by a step that produces its kind
// with matching parameters and has the solutions of its dependencies upstream.
bool satisfies(const SubProblemGraph& graph, const std::vector<WorkflowStep>& steps) {
  std::map<std::string, const WorkflowStep*> by_id;
  for (const auto& s : steps) by_id[s.id] = &s;
  for (const auto& s : steps)
    for (const auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kStepOutput && !by_id.count(src.ref)) return false;
  std::function<void(const std::string&, std::set<std::string>&)> ancestors = [&](const std::string& id,
                                                                                 std::set<std::string>& out) {
    for (const auto& [_, src] : by_id.at(id)->input_bindings)
      if (src.kind == Source::Kind::kStepOutput && out.insert(src.ref).second) ancestors(src.ref, out);
  };
  std::map<std::string, std::set<std::string>> solvers;  // sub-problem -> steps solving it
  for (const auto& sp_id : graph.topological_order()) {
    const auto& sp = *graph.find(sp_id);
    for (const auto& s : steps) {
      const auto* cap = fixture_reg().find(s.capability_id);
      bool produces = false;
      for (const auto& o : cap->outputs) produces = produces || o.data.kind == sp.required_output.kind;
      bool params_agree = true;
      for (const auto& [k, val] : sp.parameters)
        if (s.params.count(k) ? s.params.at(k) != val : cap->parameters.count(k) > 0) params_agree = false;
      std::set<std::string> up;
      ancestors(s.id, up);
      bool deps_upstream = true;
      for (const auto& d : sp.depends_on) {
        bool found = false;
        for (const auto& solver : solvers[d]) found = found || up.count(solver);
        deps_upstream = deps_upstream && found;
      }
      if (produces && params_agree && deps_upstream) solvers[sp_id].insert(s.id);
    }
    if (solvers[sp_id].empty()) return false;
  }
  return true;
}

void hazard_impact(Verdict& v) {
  auto p = run_query(kCs2);
  std::set<std::string> functions;
  for (const auto& s : p->design.chosen.steps) functions.insert(function_of(s.capability_id));
  v.expect(functions == std::set<std::string>{"hazard_event_process", "impact_combine"},
           "uses " + join({functions.begin(), functions.end()}, ", "));

  const auto& steps = p->design.chosen.steps;
  v.expect(satisfies(p->graph, steps), "the chosen plan does not satisfy its own goals");
  auto n = steps.size();
  int subsets = 0;
  for (unsigned mask = 0; mask + 1 < (1u << n); ++mask) {
    std::vector<WorkflowStep> sub;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) sub.push_back(steps[i]);
    ++subsets;
    v.expect(!satisfies(p->graph, sub), "strict sub-plan of " + str(sub.size()) + " steps satisfies the goals");
    auto design = p->design;
    design.chosen.steps = sub;
    v.expect(!validate_design(design, fixture_reg()).valid(), "validator accepts a strict sub-plan");
  }

  if (!v.expect(p->result.success, "execution failed")) return;
  auto with_probability = [&](const std::string& prob) {
    auto plan = p->plan;
    for (auto& s : plan.steps)
      if (s.params.count("failure_probability")) s.params["failure_probability"] = prob;
    MemoryBlobStore blobs;
    auto r = execute(plan, fixture_adapters(), p->inputs, blobs);
    std::map<std::string, std::map<std::string, Rational>> out;
    for (const auto& s : plan.steps)
      if (function_of(s.capability_id) == "hazard_event_process")
        out[s.id] = impact_rows(load_value(blobs, r.step_outputs.at(s.id + ".impact").digest).payload);
    out["combined"] = impact_rows(load_value(blobs, r.step_outputs.at(plan.steps.back().id + ".impact").digest).payload);
    return out;
  };
  auto one = with_probability("1");
  for (const char* prob : {"1/10", "3/7", "0"}) {
    auto scaled = with_probability(prob);
    for (const auto& [step, rows] : one)
      for (const auto& [country, value] : rows)
        v.expect(scaled[step][country] == parse_rational(prob) * value,
                 "hazard(" + std::string(prob) + ") != p * hazard(1) at " + step + "/" + country);
  }
  v.note(str(subsets) + " strict sub-plans refuted");
}

// --- 3 ----------------------------------------------------------------------

// Synchronous rounds recomputed from scratch until nothing changes.
std::vector<std::set<int>> cascade_oracle(const toolsim::FixtureDataset& ds, const std::set<std::string>& cables,
                                          const toolsim::AsGraph& g, const Rational& threshold) {
  std::set<std::string> links;
  for (const auto& l : ds.ip_links)
    if (cables.count(l.cable_id)) links.insert(l.link_id);
  std::set<int> failed;
  std::vector<std::set<int>> rounds;
  while (true) {
    std::set<int> next;
    for (const auto& node : g.nodes) {
      if (failed.count(node.asn)) continue;
      int total = 0, down = 0;
      for (const auto& l : node.links) {
        ++total;
        down += links.count(l) ? 1 : 0;
      }
      for (const auto& [dep, up] : g.edges)
        if (dep == node.asn) {
          ++total;
          down += failed.count(up) ? 1 : 0;
        }
      if (total > 0 && Rational(down, total) >= threshold) next.insert(node.asn);
    }
    if (next.empty()) break;
    failed.insert(next.begin(), next.end());
    rounds.push_back(next);
  }
  return rounds;
}

std::vector<std::set<int>> as_rounds(const std::vector<toolsim::TimelineRow>& timeline) {
  std::vector<std::set<int>> out;
  for (const auto& row : timeline) {
    if (row.layer != "as") continue;
    std::set<int> s;
    for (const auto& e : row.entities) s.insert(std::stoi(e.substr(2)));
    out.push_back(s);
  }
  return out;
}

void cascade(Verdict& v) {
  auto p = run_query(kCs3);
  std::set<std::string> frameworks;
  for (const auto& s : p->design.chosen.steps) frameworks.insert(fixture_reg().find(s.capability_id)->framework);
  v.expect(frameworks.size() >= 4, "only " + str(frameworks.size()) + " frameworks");
  if (!v.expect(p->result.success, "execution failed")) return;

  // The fixture cascade against the oracle, from the step's own inputs.
  for (const auto& s : p->plan.steps) {
    if (function_of(s.capability_id) != "cascade_propagate") continue;
    auto input = [&](const std::string& port) {
      const auto& src = s.input_bindings.at(port);
      return load_value(p->blobs, p->result.step_outputs.at(src.ref + "." + src.port).digest).payload;
    };
    auto impact = toolsim::impact_from_payload(input("impact"));
    auto graph = toolsim::graph_from_payload(input("deps"));
    std::set<std::string> cables;
    for (const auto& r : impact.rows)
      if (r.impact > 0) cables.insert(r.key);
    auto threshold = parse_rational(s.params.count("threshold") ? s.params.at("threshold") : "1/2");
    auto timeline = toolsim::timeline_from_payload(load_value(p->blobs, p->result.step_outputs.at(s.id + ".timeline").digest).payload);
    v.expect(as_rounds(timeline) == cascade_oracle(*fixture_ds(), cables, graph, threshold),
             "fixture cascade differs from the round oracle");
  }

  std::mt19937_64 rng(31337);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const std::vector<Rational> thresholds{Rational(1, 10), Rational(1, 4), Rational(1, 3), Rational(1, 2),
                                         Rational(2, 3), Rational(1)};
  int cascades = 0;
  for (int trial = 0; trial < 200; ++trial) {
    toolsim::FixtureDataset ds;
    int ncables = pick(1, 4), nlinks = pick(1, 12), nodes = pick(1, 20);
    for (int i = 0; i < nlinks; ++i)
      ds.ip_links.push_back({"L" + str(i), "C" + str(pick(0, ncables - 1)), "", ""});
    toolsim::AsGraph g;
    for (int a = 1; a <= nodes; ++a) {
      toolsim::AsNode n;
      n.asn = a;
      for (int i = 0; i < nlinks; ++i)
        if (pick(0, 3) == 0) n.links.push_back("L" + str(i));
      g.nodes.push_back(n);
    }
    std::set<std::pair<int, int>> edges;
    for (int e = pick(0, 2 * nodes); e > 0; --e) {
      int a = pick(1, nodes), b = pick(1, nodes);
      if (a != b) edges.insert({a, b});
    }
    g.edges.assign(edges.begin(), edges.end());
    toolsim::ImpactTable impact{"cable", {}};
    std::set<std::string> down;
    for (int c = 0; c < ncables; ++c)
      if (pick(0, 1)) {
        down.insert("C" + str(c));
        impact.rows.push_back({"C" + str(c), std::nullopt, std::nullopt, Rational(1, 2)});
      }
    std::set<int> previous;
    for (std::size_t t = thresholds.size(); t-- > 0;) {  // strictest first
      auto timeline = toolsim::cascade_propagate(ds, impact, g, thresholds[t]);
      auto rounds = as_rounds(timeline);
      if (down.empty()) {
        v.expect(timeline.empty(), "nonempty cascade without failed cables");
        continue;
      }
      if (!v.expect(rounds == cascade_oracle(ds, down, g, thresholds[t]),
                    "trial " + str(trial) + " threshold " + to_string(thresholds[t]) + ": rounds differ"))
        continue;
      std::set<int> failed;
      for (const auto& r : rounds) failed.insert(r.begin(), r.end());
      v.expect(std::includes(failed.begin(), failed.end(), previous.begin(), previous.end()),
               "trial " + str(trial) + ": lowering the threshold to " + to_string(thresholds[t]) + " shrank the cascade");
      previous = failed;
      cascades += failed.empty() ? 0 : 1;
    }
  }
  v.note(str(frameworks.size()) + " frameworks; 200 random graphs, " + str(cascades) + " nonempty cascades");
}

// --- 4 ----------------------------------------------------------------------

void forensics(Verdict& v) {
  auto p = run_query(kCs4);
  if (!v.expect(p->result.success, "execution failed")) return;
  auto anomaly = p->output(port_of(*p, "anomaly_detect")).payload;
  v.expect(anomaly.size() == 1 && anomaly[0]["onset"] == "2024-03-05T00:00:00Z",
           "onset is " + (anomaly.empty() ? std::string("missing") : anomaly[0]["onset"].dump()));
  auto ranking = p->output(port_of(*p, "suspect_cable_rank")).payload;
  if (!v.expect(!ranking.empty(), "empty ranking")) return;
  v.expect(ranking[0]["cable_id"] == "C2", "top-1 is " + ranking[0]["cable_id"].dump());
  if (ranking.size() > 1)
    v.expect(parse_rational(ranking[0]["score"].get<std::string>()) > parse_rational(ranking[1]["score"].get<std::string>()), "C2 is tied for first");
  // score = path share x timing factor; the expected values are worked out
  // by hand from the fixture traceroutes and BGP withdrawals.
  const std::map<std::string, std::pair<Rational, Rational>> hand{
      {"C2", {Rational(2, 3), 1}}, {"C1", {Rational(2, 3), Rational(1, 4)}}, {"C3", {Rational(1, 3), Rational(1, 4)}}};
  for (const auto& row : ranking) {
    std::string cable = row["cable_id"];
    auto share = parse_rational(row["path_share"].get<std::string>()), timing = parse_rational(row["timing_factor"].get<std::string>());
    v.expect(parse_rational(row["score"].get<std::string>()) == share * timing, cable + ": score != share x T");
    if (hand.count(cable))
      v.expect(share == hand.at(cable).first && timing == hand.at(cable).second,
               cable + ": (share, T) = (" + to_string(share) + ", " + to_string(timing) + ")");
  }
  v.expect(ranking[0]["timing_factor"] == "1", "T(C2) = " + ranking[0]["timing_factor"].dump());
}

// --- 5 ----------------------------------------------------------------------

void planner_optimality(Verdict& v) {
  std::mt19937_64 rng(20240308);
  int solved = 0, infeasible = 0, deep = 0;
  for (int trial = 0; trial < 500; ++trial) {
    TempDir dir;
    auto scenario = oracle::random_scenario(rng);
    oracle::write(scenario, dir.path());
    auto reg = load_registry(dir.path());
    auto goal = *reg.spec_for_kind(scenario.goal);
    auto available = oracle::available_specs(scenario, reg);
    auto expected = oracle::min_cost(scenario, reg, 6);
    std::vector<std::string> docs;
    for (int rep = 0; rep < 3; ++rep) {
      try {
        docs.push_back(to_json(plan_for_kind(goal, reg, available)).dump());
      } catch (const Error& e) {
        docs.push_back(std::string("error:") + e.what());
      }
    }
    std::string where = "trial " + str(trial);
    v.expect(docs[0] == docs[1] && docs[1] == docs[2], where + ": nondeterministic");
    if (docs[0].rfind("error:", 0) == 0) {
      v.expect(!expected.has_value(), where + ": no plan but oracle found cost " + (expected ? to_string(*expected) : ""));
      ++infeasible;
      continue;
    }
    auto plan = candidate_from_json(Json::parse(docs[0]), "plan");
    ++solved;
    v.expect(oracle::plan_cost(plan, reg) == plan.score.compute_cost, where + ": reported cost is not the plan's cost");
    if (plan.steps.size() <= 6) {
      v.expect(expected.has_value() && plan.score.compute_cost == *expected,
               where + ": cost " + to_string(plan.score.compute_cost) + " vs oracle " +
                   (expected ? to_string(*expected) : "none"));
    } else {
      ++deep;
      if (expected) v.expect(plan.score.compute_cost <= *expected, where + ": deeper plan costs more than oracle");
    }
  }
  v.note(str(solved) + " solved, " + str(infeasible) + " infeasible, " + str(deep) + " deeper than 6");
}

// --- 6 ----------------------------------------------------------------------

void gating(Verdict& v) {
  int sequences = 0;
  std::function<void(std::vector<int>)> walk = [&](std::vector<int> seq) {
    MemoryRunStore store;
    MockStages stages;
    FixedClock clock(0, 1);
    Orchestrator orch(store, stages, clock, {}, 1);
    auto id = orch.start_run("q", RunMode::kExpert);
    auto record = orch.get(id);
    auto where = [&] {
      std::string s = "sequence";
      for (int c : seq) s += " " + str(c);
      return s;
    };
    for (int c : seq) {
      if (record.terminal()) break;
      int gate = 0;
      for (int s = 1; s <= kStageCount; ++s)
        if (record.stage(s).status == StageStatus::kAwaitingReview) gate = s;
      if (!v.expect(gate > 0, where() + ": no gate")) return;
      for (int s = 1; s <= kStageCount; ++s) {
        if (s == gate) continue;
        auto before = to_json(orch.get(id));
        bool refused = false;
        try {
          orch.submit_review(id, {s, DecisionKind::kApprove, {}, "", "x"});
        } catch (const Error& e) {
          refused = e.code() == ErrorCode::kWrongState;
        }
        v.expect(refused && to_json(orch.get(id)) == before, where() + ": review of a non-gated stage accepted");
      }
      auto before = to_json(record);
      if (c == 2) {
        bool invalid = false;
        try {
          orch.submit_review(id, {gate, DecisionKind::kEdit, Json{{"ok", false}}, "", "x"});
        } catch (const Error& e) {
          invalid = e.code() == ErrorCode::kInvalidEdit;
        }
        v.expect(invalid && to_json(orch.get(id)) == before, where() + ": invalid edit changed state");
      } else if (c == 1) {
        Json edited{{"ok", true}, {"gate", gate}};
        record = orch.submit_review(id, {gate, DecisionKind::kEdit, edited, "", "x"});
        if (gate < kStageCount)
          v.expect((*store.get_document(id, artifact_name(gate + 1)))["upstream"] == digest_of(edited),
                   where() + ": edit did not reach the next stage");
      } else {
        record = orch.submit_review(id, {gate, c == 0 ? DecisionKind::kApprove : DecisionKind::kReject, {}, "", "x"});
      }
      for (const auto& problem : gating_violations(orch.get(id))) v.expect(false, where() + ": " + problem);
      v.expect(to_json(orch.advance(id)) == to_json(orch.get(id)), where() + ": advance moved past a gate");
    }
    ++sequences;
    if (seq.size() < 5)
      for (int c = 0; c < 4; ++c) {
        auto next = seq;
        next.push_back(c);
        walk(next);
      }
  };
  walk({});

  // The real stages: swapping in the equal-cost alternative at stage 2
  // reaches the compiled plan; a cyclic edit is refused without effect.
  Home h;
  auto id = h.orch->start_run(kCs1, RunMode::kExpert);
  h.orch->submit_review(id, {1, DecisionKind::kApprove, {}, "", "r"});
  auto original = *h.runs.get_document(id, artifact_name(2));
  auto design = workflow_design_from_json(original);
  for (auto& s : design.chosen.steps)
    if (s.capability_id == "nautilus.impact_aggregate") s.capability_id = "xaminer.impact_aggregate";
  auto cyclic = design;
  cyclic.chosen.steps.front().input_bindings.begin()->second = Source::step(cyclic.chosen.steps.back().id, "impact");
  auto before = to_json(h.orch->get(id));
  bool rejected = false;
  try {
    h.orch->submit_review(id, {2, DecisionKind::kEdit, to_json(cyclic), "", "r"});
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::kInvalidEdit;
    bool cites_cycle = false;
    for (const auto& d : e.details()) cites_cycle = cites_cycle || d.find("cycle") != std::string::npos;
    v.expect(cites_cycle, "InvalidEdit does not cite the cycle");
  }
  v.expect(rejected, "cyclic edit accepted");
  v.expect(to_json(h.orch->get(id)) == before && *h.runs.get_document(id, artifact_name(2)) == original,
           "cyclic edit changed the run");
  h.orch->submit_review(id, {2, DecisionKind::kEdit, to_json(design), "", "r"});
  auto plan = executable_plan_from_json(*h.runs.get_document(id, artifact_name(3)));
  bool swapped = false;
  for (const auto& s : plan.steps) swapped = swapped || s.capability_id == "xaminer.impact_aggregate";
  v.expect(swapped, "edited stage-2 design did not reach the stage-3 plan");
  v.note(str(sequences) + " decision sequences");
}

// --- 7 ----------------------------------------------------------------------

class PerturbingAdapter final : public ToolAdapter {
 public:
  explicit PerturbingAdapter(AdapterSet base) : base_(std::move(base)) {}
  bool supports(const std::string& id) const override { return base_.find(id) != nullptr; }
  std::vector<std::string> supported_ids() const override { return {}; }
  PortValues invoke(const std::string& id, const PortValues& in, const Params& params) const override {
    auto out = base_.find(id)->invoke(id, in, params);
    if (id == "nautilus.impact_aggregate")
      for (auto& [_, val] : out)
        if (val.payload.is_array() && !val.payload.empty()) val.payload.erase(val.payload.begin());
    return out;
  }

 private:
  AdapterSet base_;
};

void curation(Verdict& v) {
  Home h;
  auto before = h.registry.load_latest()->entries.size();
  h.orch->start_run(cable_query("SeaMeWe-5"), RunMode::kStandard);
  h.orch->start_run(cable_query("AAE-1"), RunMode::kStandard);
  v.expect(h.registry.latest_version() == 1, "promoted before three runs shared a chain");

  auto id = h.orch->start_run(cable_query("FLAG-EA"), RunMode::kExpert);
  h.orch->submit_review(id, {1, DecisionKind::kApprove, {}, "", "r"});
  auto design = bypass_with_adapter(workflow_design_from_json(*h.runs.get_document(id, artifact_name(2))),
                                    "nautilus.ip_extract", "extract_ips");
  h.orch->submit_review(id, {2, DecisionKind::kEdit, to_json(design), "", "r"});
  h.orch->submit_review(id, {3, DecisionKind::kApprove, {}, "", "r"});
  auto proposal = *h.runs.get_document(id, artifact_name(4));
  v.expect(proposal["proposals"].size() == 1, str(proposal["proposals"].size()) + " composites proposed");
  v.expect(proposal["selected"] == Json::array({"curated.geo_impact_v1"}), "selected " + proposal["selected"].dump());

  // A perturbed replay of the same evidence fails and cannot be promoted.
  {
    auto latest = h.registry.load_latest();
    std::vector<RunTrace> traces;
    std::map<std::string, const BlobStore*> blobs;
    for (const auto& run : h.runs.list()) {
      traces.push_back(make_trace(run, executable_plan_from_json(*h.runs.get_document(run, artifact_name(3))),
                                  h.result(run)));
      blobs[run] = &h.runs.blobs(run);
    }
    auto patterns = mine_patterns(traces, *latest);
    if (v.expect(patterns.size() == 1, "mining found " + str(patterns.size()) + " patterns")) {
      AdapterSet perturbed;
      perturbed.add(std::make_shared<PerturbingAdapter>(h.stages->adapters(latest)));
      auto bad = validate_composite(patterns[0], blobs, *latest, perturbed);
      v.expect(!bad.passed, "perturbed replay passed");
      bool blocked = false;
      try {
        promote(patterns[0], bad, h.registry);
      } catch (const Error& e) {
        blocked = e.code() == ErrorCode::kPreconditionFailed;
      }
      v.expect(blocked && h.registry.latest_version() == 1, "failed verdict was promoted");
    }
  }

  auto record = h.orch->submit_review(id, {4, DecisionKind::kApprove, {}, "", "r"});
  v.expect(record.completed(), "third run did not complete");
  auto after = h.registry.load_latest();
  v.expect(after->entries.size() == before + 1, "registry grew by " + str(after->entries.size() - before));
  const auto* entry = after->find("curated.geo_impact_v1");
  if (!v.expect(entry != nullptr, "composite not in the registry")) return;

  // Plans through the composite against the expanded chain.
  AdapterSet adapters = h.stages->adapters(after);
  std::set<DataKindSpec> available{*after->spec_for_kind("ip_set")};
  auto goal = *after->spec_for_kind("impact_table");
  auto with = plan_for_kind(goal, *after, available);
  auto without = plan_for_kind(goal, fixture_reg(), available);
  bool uses = false;
  for (const auto& s : with.steps) uses = uses || s.capability_id == entry->id;
  v.expect(uses, "planner does not pick the composite");
  auto plan_with = compile(WorkflowDesign{with, {}, "", ExplorationMode::kDirect}, *after);
  auto plan_without = compile(WorkflowDesign{without, {}, "", ExplorationMode::kDirect}, fixture_reg());
  for (const char* cable : {"C1", "C2", "C3", "C4", "C5"}) {
    DataValue cables;
    cables.data = *after->spec_for_kind("cable_id_set");
    cables.payload = Json::array({{{"cable_id", cable}}});
    auto links = adapters.find("nautilus.cable_dependency_lookup")
                     ->invoke("nautilus.cable_dependency_lookup", {{"cables", cables}}, {});
    auto ips = adapters.find("nautilus.ip_extract")->invoke("nautilus.ip_extract", {{"links", links.at("links")}}, {});
    std::map<std::string, DataValue> inputs{{plan_with.run_inputs.begin()->first, ips.begin()->second}};
    MemoryBlobStore a, b;
    auto ra = execute(plan_with, adapters, inputs, a);
    auto rb = execute(plan_without, adapters, inputs, b);
    const auto& ma = plan_with.outputs_manifest.back().source;
    const auto& mb = plan_without.outputs_manifest.back().source;
    v.expect(ra.success && rb.success &&
                 ra.step_outputs.at(ma.ref + "." + ma.port).digest == rb.step_outputs.at(mb.ref + "." + mb.port).digest,
             std::string(cable) + ": composite output differs from the expanded chain");
  }
  v.note("promoted " + entry->id + " at registry v" + str(after->version));
}

// --- 8 ----------------------------------------------------------------------

void backend_robustness(Verdict& v) {
  const char* valid = R"({"goal_kind": "impact_table",
    "subject": {"entity_type": "cable", "identifiers": ["C1"]},
    "aggregation": "country", "time_window": null, "parameters": {},
    "classification": {"spatial": true, "temporal": false, "causal": false, "data_dependency": true}})";
  std::vector<std::string> vocabulary;
  for (const auto& s : fixture_reg().vocabulary) vocabulary.push_back(s.kind);
  for (int max = 1; max <= 5; ++max) {
    for (int k = 0; k <= max; ++k) {
      std::vector<std::string> responses(k, R"({"goal_kind": 3})");
      responses.push_back(valid);
      BackendConfig c;
      c.kind = BackendKind::kScripted;
      c.max_repair_attempts = max;
      auto backend = make_backend(c, std::make_shared<ScriptedTransport>(responses));
      std::string where = "max=" + str(max) + " k=" + str(k);
      try {
        auto intent = backend->propose_intent("q", "", vocabulary);
        v.expect(k < max && intent.goal_kind == "impact_table", where + ": succeeded");
      } catch (const Error& e) {
        v.expect(k == max && e.code() == ErrorCode::kIntentError, where + ": " + e.what());
      }
    }
  }

  set_network_enabled(false);
  Home h;
  for (const char* q : {kCs1, kCs2, kCs3, kCs4}) {
    auto r = h.orch->get(h.orch->start_run(q, RunMode::kStandard));
    v.expect(r.completed() && h.result(r.run_id).success, std::string("offline run failed: ") + q);
  }
  set_network_enabled(true);
}

// --- 9 ----------------------------------------------------------------------

void crash_resume(Verdict& v) {
  Home reference;
  auto ref_id = reference.orch->start_run(kCs3, RunMode::kStandard);
  auto ref = reference.result(ref_id);
  auto ref_plan = *reference.runs.get_document(ref_id, artifact_name(3));
  int steps = static_cast<int>(executable_plan_from_json(ref_plan).steps.size());
  for (int crash_at : {1, steps / 2, steps}) {
    Home h;
    std::cout.flush();
    pid_t pid = fork();
    if (pid == 0) {
      int seen = 0;
      h.stages->before_step = [&](const PlanStep&) {
        if (++seen == crash_at) _exit(7);
      };
      h.orch->start_run(kCs3, RunMode::kStandard);
      _exit(0);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    std::string where = "crash before step " + str(crash_at);
    if (!v.expect(WIFEXITED(status) && WEXITSTATUS(status) == 7, where + ": child did not stop mid-stage")) continue;
    auto ids = h.runs.list();
    if (!v.expect(ids.size() == 1, where + ": no persisted run")) continue;
    v.expect(h.runs.load_record(ids[0]).stage(3).status == StageStatus::kRunning, where + ": stage 3 not running");
    auto resumed = h.orch->advance(ids[0]);
    v.expect(resumed.completed(), where + ": resume did not complete");
    v.expect(h.result(ids[0]).digest() == ref.digest(), where + ": result digest differs");
    v.expect(*h.runs.get_document(ids[0], artifact_name(3)) == ref_plan, where + ": plan differs");
  }
  v.note("crashes at steps 1, " + str(steps / 2) + ", " + str(steps) + " of " + str(steps));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"cable failure impact matches the join oracle", cable_impact},
      {"hazard plan is minimal and linear in p", hazard_impact},
      {"cascade matches the round oracle and is monotone", cascade},
      {"forensics finds C2 at t0 with the hand scores", forensics},
      {"planner cost equals brute-force minimum, deterministic", planner_optimality},
      {"review gating, downstream edits, invalid edits", gating},
      {"curation proposes, validates and promotes one composite", curation},
      {"backend repair limit and offline pipeline", backend_robustness},
      {"crash during execution resumes to identical results", crash_resume},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    bool ok = v.failures.empty();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first;
    if (!v.notes.empty()) std::cout << " (" << join(v.notes, "; ") << ")";
    std::cout << "\n";
    for (std::size_t k = 0; k < v.failures.size() && k < 10; ++k) std::cout << "    " << v.failures[k] << "\n";
    if (v.failures.size() > 10) std::cout << "    ... " << v.failures.size() - 10 << " more\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
