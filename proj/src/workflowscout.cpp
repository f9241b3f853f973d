#include "arachnet/workflowscout.hpp"

#include "arachnet/backend.hpp"
#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>
#include <tuple>

namespace arachnet {

namespace jr = jsonread;

// ---------------------------------------------------------------------------
// Documents

Json to_json(const Source& source) {
  Json doc;
  switch (source.kind) {
    case Source::Kind::kStepOutput: doc = {{"step", source.ref}, {"port", source.port}}; break;
    case Source::Kind::kRunInput: doc = {{"run_input", source.ref}}; break;
    case Source::Kind::kParam: doc = {{"param", source.ref}}; break;
  }
  if (!source.adapters.empty()) doc["adapters"] = source.adapters;
  return doc;
}

Source source_from_json(const Json& doc, const std::string& where) {
  jr::check_keys(doc, {"step", "port", "run_input", "param", "adapters"}, where);
  Source s;
  int forms = doc.contains("step") + doc.contains("run_input") + doc.contains("param");
  if (forms != 1) jr::fail(where, "exactly one of step, run_input, param is required");
  if (doc.contains("step")) {
    s.kind = Source::Kind::kStepOutput;
    s.ref = jr::string_field(doc, "step", where);
    s.port = jr::string_field(doc, "port", where);
  } else if (doc.contains("run_input")) {
    s.kind = Source::Kind::kRunInput;
    s.ref = jr::string_field(doc, "run_input", where);
  } else {
    s.kind = Source::Kind::kParam;
    s.ref = jr::string_field(doc, "param", where);
  }
  s.adapters = jr::string_list(doc, "adapters", where, false);
  return s;
}

const WorkflowStep* CandidateWorkflow::find(std::string_view id) const {
  for (const auto& s : steps)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<std::string> CandidateWorkflow::capability_multiset() const {
  std::vector<std::string> ids;
  for (const auto& s : steps) ids.push_back(s.capability_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string_view to_string(ExplorationMode mode) { return mode == ExplorationMode::kDirect ? "direct" : "comparative"; }

Json to_json(const CandidateWorkflow& c) {
  Json steps = Json::array();
  for (const auto& s : c.steps) {
    Json bindings = Json::object();
    for (const auto& [port, src] : s.input_bindings) bindings[port] = to_json(src);
    steps.push_back({{"id", s.id}, {"capability_id", s.capability_id}, {"input_bindings", bindings}, {"params", s.params}});
  }
  Json outputs = Json::array();
  for (const auto& o : c.outputs)
    outputs.push_back({{"sub_problem", o.sub_problem}, {"data", to_json(o.data)}, {"source", to_json(o.source)}});
  Json run_inputs = Json::object();
  for (const auto& [name, spec] : c.run_inputs) run_inputs[name] = to_json(spec);
  return {{"steps", steps},
          {"score", {{"data_requirements", c.score.data_requirements},
                     {"compute_cost", to_string(c.score.compute_cost)},
                     {"reliability", to_string(c.score.reliability)}}},
          {"outputs", outputs},
          {"run_inputs", run_inputs}};
}

CandidateWorkflow candidate_from_json(const Json& doc, const std::string& where) {
  jr::check_keys(doc, {"steps", "score", "outputs", "run_inputs"}, where);
  CandidateWorkflow c;
  const auto& steps = jr::array_field(doc, "steps", where);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto w = where + ".steps[" + std::to_string(i) + "]";
    jr::check_keys(steps[i], {"id", "capability_id", "input_bindings", "params"}, w);
    WorkflowStep s;
    s.id = jr::string_field(steps[i], "id", w);
    s.capability_id = jr::string_field(steps[i], "capability_id", w);
    if (steps[i].contains("input_bindings")) {
      const auto& b = steps[i]["input_bindings"];
      jr::expect_object(b, w + ".input_bindings");
      for (const auto& [port, src] : b.items()) s.input_bindings[port] = source_from_json(src, w + ".input_bindings." + port);
    }
    s.params = jr::string_map(steps[i], "params", w);
    c.steps.push_back(std::move(s));
  }
  if (doc.contains("score")) {
    const auto& sc = doc["score"];
    jr::check_keys(sc, {"data_requirements", "compute_cost", "reliability"}, where + ".score");
    if (sc.contains("data_requirements")) {
      if (!sc["data_requirements"].is_number_integer()) jr::fail(where + ".score.data_requirements", "expected an integer");
      c.score.data_requirements = sc["data_requirements"].get<int>();
    }
    if (sc.contains("compute_cost")) c.score.compute_cost = jr::rational_field(sc, "compute_cost", where + ".score");
    if (sc.contains("reliability")) c.score.reliability = jr::rational_field(sc, "reliability", where + ".score");
  }
  if (doc.contains("outputs")) {
    const auto& outs = jr::array_field(doc, "outputs", where);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      auto w = where + ".outputs[" + std::to_string(i) + "]";
      jr::check_keys(outs[i], {"sub_problem", "data", "source"}, w);
      WorkflowOutput o;
      o.sub_problem = jr::string_field(outs[i], "sub_problem", w);
      try {
        o.data = data_kind_from_json(jr::field(outs[i], "data", w));
      } catch (const Error& e) {
        jr::fail(w + ".data", e.what());
      }
      o.source = source_from_json(jr::field(outs[i], "source", w), w + ".source");
      c.outputs.push_back(std::move(o));
    }
  }
  if (doc.contains("run_inputs")) {
    const auto& ri = doc["run_inputs"];
    jr::expect_object(ri, where + ".run_inputs");
    for (const auto& [name, spec] : ri.items()) {
      try {
        c.run_inputs[name] = data_kind_from_json(spec);
      } catch (const Error& e) {
        jr::fail(where + ".run_inputs." + name, e.what());
      }
    }
  }
  return c;
}

Json to_json(const WorkflowDesign& d) {
  Json alternatives = Json::array();
  for (const auto& a : d.alternatives) alternatives.push_back(to_json(a));
  return {{"chosen", to_json(d.chosen)},
          {"alternatives", alternatives},
          {"rationale", d.rationale},
          {"exploration_mode", to_string(d.exploration_mode)}};
}

WorkflowDesign workflow_design_from_json(const Json& doc) {
  const std::string root = "stage2";
  jr::check_keys(doc, {"chosen", "alternatives", "rationale", "exploration_mode"}, root);
  WorkflowDesign d;
  d.chosen = candidate_from_json(jr::field(doc, "chosen", root), root + ".chosen");
  if (doc.contains("alternatives")) {
    const auto& alts = jr::array_field(doc, "alternatives", root);
    for (std::size_t i = 0; i < alts.size(); ++i)
      d.alternatives.push_back(candidate_from_json(alts[i], root + ".alternatives[" + std::to_string(i) + "]"));
  }
  d.rationale = jr::opt_string(doc, "rationale", root);
  auto mode = jr::opt_string(doc, "exploration_mode", root, "direct");
  if (mode != "direct" && mode != "comparative") jr::fail(root + ".exploration_mode", "direct|comparative");
  d.exploration_mode = mode == "direct" ? ExplorationMode::kDirect : ExplorationMode::kComparative;
  return d;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

// Distinct (base source, adapter chain) conversions; each is charged the full
// chain cost, matching the planner's cost model.
std::set<std::pair<Source, std::vector<std::string>>> conversions(const CandidateWorkflow& c) {
  std::set<std::pair<Source, std::vector<std::string>>> out;
  auto visit = [&](const Source& s) {
    if (!s.adapters.empty()) out.insert({s.without_adapters(), s.adapters});
  };
  for (const auto& step : c.steps)
    for (const auto& [_, src] : step.input_bindings) visit(src);
  for (const auto& o : c.outputs) visit(o.source);
  return out;
}

}  // namespace

TradeoffScore score_candidate(const CandidateWorkflow& c, const Registry& registry) {
  TradeoffScore score;
  std::set<std::string> inputs;
  auto note = [&](const Source& s) {
    if (s.kind == Source::Kind::kRunInput) inputs.insert(s.ref);
  };
  for (const auto& step : c.steps) {
    if (const auto* entry = registry.find(step.capability_id)) {
      score.compute_cost += entry->cost_hint;
      score.reliability *= entry->reliability;
    }
    for (const auto& [_, src] : step.input_bindings) note(src);
  }
  for (const auto& o : c.outputs) note(o.source);
  for (const auto& [base, chain] : conversions(c))
    for (const auto& a : chain)
      if (const auto* t = registry.find_translation(a)) score.compute_cost += t->cost;
  score.data_requirements = static_cast<int>(inputs.size());
  return score;
}

// ---------------------------------------------------------------------------
// Planner

namespace planning {

std::vector<std::string> Fragment::sorted_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : steps) ids.push_back(s.capability->id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

struct Path {
  Rational cost;
  std::vector<std::string> adapters;
};

class CompatCache {
 public:
  explicit CompatCache(const Registry& registry) : registry_(registry) {}

  const std::optional<Path>& get(const DataKindSpec& from, const DataKindSpec& to) {
    auto key = std::make_pair(from, to);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::optional<Path> result;
    auto r = check_compatibility(from, to, registry_);
    if (std::holds_alternative<Direct>(r)) {
      result = Path{0, {}};
    } else if (auto* via = std::get_if<ViaAdapters>(&r)) {
      Path p{via->total_cost, {}};
      for (const auto& t : via->path) p.adapters.push_back(t.adapter_id);
      result = p;
    }
    return cache_.emplace(key, std::move(result)).first->second;
  }

 private:
  const Registry& registry_;
  std::map<std::pair<DataKindSpec, DataKindSpec>, std::optional<Path>> cache_;
};

struct Provider {
  int available = -1;  // index into available list, or -1
  int step = -1;       // index into state steps, or -1
  std::string port;
  std::vector<std::string> adapters;
};

struct State {
  std::vector<const CapabilityEntry*> steps;
  std::map<DataKindSpec, Provider> assigned;
  std::set<DataKindSpec> pending;
  Rational cost = 0;
  std::vector<std::string> sorted_ids;
};

bool acyclic_order(const State& s, std::vector<int>& order) {
  const int n = static_cast<int>(s.steps.size());
  std::vector<std::set<int>> deps(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& p : s.steps[i]->inputs) {
      if (!p.required) continue;
      const auto& prov = s.assigned.at(p.data);
      if (prov.step >= 0) deps[i].insert(prov.step);
    }
  }
  std::vector<bool> placed(n, false);
  order.clear();
  while (static_cast<int>(order.size()) < n) {
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (placed[i]) continue;
      bool ready = std::all_of(deps[i].begin(), deps[i].end(), [&](int d) { return placed[d]; });
      if (!ready) continue;
      if (pick < 0 || s.steps[i]->id < s.steps[pick]->id) pick = i;
    }
    if (pick < 0) return false;
    placed[pick] = true;
    order.push_back(pick);
  }
  return true;
}

Fragment build_fragment(const State& s, const std::vector<int>& order, const std::vector<DataKindSpec>& goals,
                        const std::vector<std::pair<DataKindSpec, Source>>& available) {
  std::vector<int> position(s.steps.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);
  auto source_of = [&](const Provider& prov) {
    Source src;
    if (prov.available >= 0) {
      src = available[prov.available].second;
    } else {
      src = Source::step("#" + std::to_string(position[prov.step]), prov.port);
    }
    src.adapters.insert(src.adapters.end(), prov.adapters.begin(), prov.adapters.end());
    return src;
  };
  Fragment f;
  f.cost = s.cost;
  for (int idx : order) {
    Fragment::Step step;
    step.capability = s.steps[idx];
    for (const auto& p : step.capability->inputs)
      if (p.required) step.bindings[p.name] = source_of(s.assigned.at(p.data));
    f.steps.push_back(std::move(step));
  }
  for (const auto& g : goals) f.goal_sources.push_back(source_of(s.assigned.at(g)));
  return f;
}

}  // namespace

std::vector<Fragment> k_best(const std::vector<DataKindSpec>& goals, const Registry& registry,
                             const std::vector<std::pair<DataKindSpec, Source>>& available, std::size_t k,
                             const CapabilityFilter& filter, std::size_t max_expansions) {
  CompatCache compat(registry);
  std::vector<const CapabilityEntry*> candidates;
  for (const auto& [id, entry] : registry.entries)
    if (!filter || filter(entry)) candidates.push_back(&entry);

  std::deque<State> states;
  using Key = std::tuple<Rational, std::size_t, std::vector<std::string>, std::size_t>;
  std::set<Key> queue;
  auto push = [&](State s) {
    std::size_t id = states.size();
    queue.insert({s.cost, s.steps.size(), s.sorted_ids, id});
    states.push_back(std::move(s));
  };
  State init;
  init.pending.insert(goals.begin(), goals.end());
  push(std::move(init));

  std::vector<Fragment> results;
  std::set<std::vector<std::string>> seen;
  std::size_t expansions = 0;
  while (!queue.empty() && results.size() < k) {
    if (++expansions > max_expansions) break;
    auto [cost, nsteps, ids, idx] = *queue.begin();
    queue.erase(queue.begin());
    State s = std::move(states[idx]);
    if (s.pending.empty()) {
      std::vector<int> order;
      if (!acyclic_order(s, order)) continue;
      if (!seen.insert(s.sorted_ids).second) continue;
      results.push_back(build_fragment(s, order, goals, available));
      continue;
    }
    DataKindSpec need = *s.pending.begin();
    s.pending.erase(s.pending.begin());

    auto assign = [&](const State& base, Provider prov, const Rational& extra) {
      State next = base;
      next.assigned[need] = std::move(prov);
      next.cost += extra;
      push(std::move(next));
    };
    for (std::size_t a = 0; a < available.size(); ++a) {
      if (const auto& path = compat.get(available[a].first, need))
        assign(s, Provider{static_cast<int>(a), -1, "", path->adapters}, path->cost);
    }
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      for (const auto& o : s.steps[i]->outputs) {
        if (const auto& path = compat.get(o.data, need))
          assign(s, Provider{-1, static_cast<int>(i), o.name, path->adapters}, path->cost);
      }
    }
    for (const auto* cap : candidates) {
      if (std::find(s.steps.begin(), s.steps.end(), cap) != s.steps.end()) continue;
      for (const auto& o : cap->outputs) {
        const auto& path = compat.get(o.data, need);
        if (!path) continue;
        State next = s;
        next.steps.push_back(cap);
        next.sorted_ids.insert(std::upper_bound(next.sorted_ids.begin(), next.sorted_ids.end(), cap->id), cap->id);
        next.assigned[need] = Provider{-1, static_cast<int>(next.steps.size() - 1), o.name, path->adapters};
        next.cost += cap->cost_hint + path->cost;
        for (const auto& in : cap->inputs)
          if (in.required && !next.assigned.count(in.data)) next.pending.insert(in.data);
        push(std::move(next));
      }
    }
  }
  return results;
}

std::vector<std::string> blocking_kinds(const std::vector<DataKindSpec>& goals, const Registry& registry,
                                        const std::set<DataKindSpec>& available, const CapabilityFilter& filter) {
  std::set<DataKindSpec> reachable = available;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& t : registry.translations)
      if (reachable.count(t.from) && reachable.insert(t.to).second) grew = true;
    for (const auto& [id, entry] : registry.entries) {
      if (filter && !filter(entry)) continue;
      bool ready = std::all_of(entry.inputs.begin(), entry.inputs.end(),
                               [&](const PortSpec& p) { return !p.required || reachable.count(p.data); });
      if (!ready) continue;
      for (const auto& o : entry.outputs)
        if (reachable.insert(o.data).second) grew = true;
    }
  }
  std::set<std::string> blocking;
  for (const auto& g : goals) {
    if (reachable.count(g)) continue;
    blocking.insert(g.kind);
    for (const auto& [id, entry] : registry.entries) {
      if (filter && !filter(entry)) continue;
      bool produces = std::any_of(entry.outputs.begin(), entry.outputs.end(),
                                  [&](const PortSpec& p) { return p.data.kind == g.kind; });
      if (!produces) continue;
      for (const auto& p : entry.inputs)
        if (p.required && !reachable.count(p.data)) blocking.insert(p.data.kind);
    }
  }
  if (blocking.empty())
    for (const auto& g : goals) blocking.insert(g.kind);
  return {blocking.begin(), blocking.end()};
}

}  // namespace planning

// ---------------------------------------------------------------------------
// Fragment merging

namespace {

class Merger {
 public:
  Merger(const Registry& registry, const std::map<std::string, std::string>& intent_params)
      : registry_(registry), intent_params_(intent_params) {}

  // Adds the fragment's steps (deduplicating structurally identical ones) and
  // returns its goal sources in global ids. "@<sub_problem>" references
  // resolve through `deps`.
  std::vector<Source> add(const planning::Fragment& f, const std::map<std::string, Source>& deps,
                          const std::map<std::string, std::string>& sp_params) {
    std::vector<std::string> local;
    auto resolve = [&](const Source& s) {
      if (s.kind != Source::Kind::kStepOutput) return s;
      Source out = s;
      if (!s.ref.empty() && s.ref[0] == '#') {
        out.ref = local.at(std::stoul(s.ref.substr(1)));
      } else if (!s.ref.empty() && s.ref[0] == '@') {
        out = deps.at(s.ref.substr(1));
        out.adapters.insert(out.adapters.end(), s.adapters.begin(), s.adapters.end());
      }
      return out;
    };
    for (const auto& fs : f.steps) {
      WorkflowStep step;
      step.capability_id = fs.capability->id;
      for (const auto& [port, src] : fs.bindings) step.input_bindings[port] = resolve(src);
      step.params = fs.capability->parameters;
      for (auto* overrides : {&intent_params_, &sp_params}) {
        for (const auto& [k, v] : *overrides)
          if (step.params.count(k)) step.params[k] = v;
      }
      local.push_back(insert(std::move(step), *fs.capability));
    }
    std::vector<Source> goals;
    for (const auto& g : f.goal_sources) goals.push_back(resolve(g));
    return goals;
  }

  std::vector<WorkflowStep> take() { return std::move(steps_); }

 private:
  std::string insert(WorkflowStep step, const CapabilityEntry& cap) {
    for (const auto& existing : steps_) {
      if (existing.capability_id == step.capability_id && existing.input_bindings == step.input_bindings &&
          existing.params == step.params)
        return existing.id;
    }
    auto base = cap.function_name();
    int n = ++names_[base];
    step.id = n == 1 ? base : base + "_" + std::to_string(n);
    while (std::any_of(steps_.begin(), steps_.end(), [&](const WorkflowStep& s) { return s.id == step.id; }))
      step.id = base + "_" + std::to_string(++names_[base]);
    steps_.push_back(std::move(step));
    return steps_.back().id;
  }

  const Registry& registry_;
  const std::map<std::string, std::string>& intent_params_;
  std::vector<WorkflowStep> steps_;
  std::map<std::string, int> names_;
};

std::string describe(const Rational& r) {
  std::ostringstream out;
  out << to_string(r);
  if (boost::multiprecision::denominator(r) != 1) out << " (" << to_double(r) << ")";
  return out.str();
}

}  // namespace

CandidateWorkflow plan_for_kind(const DataKindSpec& goal, const Registry& registry,
                                const std::set<DataKindSpec>& available, std::size_t max_expansions) {
  if (!registry.declares(goal))
    throw Error(ErrorCode::kUnknownKind, "goal " + goal.label() + " is not declared in the vocabulary");
  std::vector<std::pair<DataKindSpec, Source>> sources;
  for (const auto& spec : available) sources.push_back({spec, Source::run_input(spec.kind)});
  auto fragments = planning::k_best({goal}, registry, sources, 1, nullptr, max_expansions);
  if (fragments.empty()) {
    auto blocking = planning::blocking_kinds({goal}, registry, available, nullptr);
    throw Error(ErrorCode::kNoPlan, "no plan produces " + goal.label() + "; blocking: " + join(blocking, ", "), blocking);
  }
  static const std::map<std::string, std::string> no_params;
  Merger merger(registry, no_params);
  auto goals = merger.add(fragments.front(), {}, {});
  CandidateWorkflow c;
  c.steps = merger.take();
  c.outputs.push_back({goal.kind, goal, goals.front()});
  for (const auto& spec : available) {
    auto mentions = [&](const Source& s) { return s.kind == Source::Kind::kRunInput && s.ref == spec.kind; };
    bool used = mentions(goals.front());
    for (const auto& st : c.steps)
      for (const auto& [_, src] : st.input_bindings) used = used || mentions(src);
    if (used) c.run_inputs[spec.kind] = spec;
  }
  c.score = score_candidate(c, registry);
  return c;
}

// ---------------------------------------------------------------------------
// explore

namespace {

struct SubProblemOption {
  planning::Fragment fragment;
  std::vector<std::string> sorted_ids;
};

bool option_less(const SubProblemOption& a, const SubProblemOption& b) {
  return std::make_tuple(a.fragment.cost, a.fragment.steps.size(), a.sorted_ids) <
         std::make_tuple(b.fragment.cost, b.fragment.steps.size(), b.sorted_ids);
}

std::vector<SubProblemOption> options_for(const SubProblem& sp, const SubProblemGraph& graph, const Registry& registry,
                                          const std::vector<std::pair<DataKindSpec, Source>>& run_inputs,
                                          const planning::CapabilityFilter& filter, const ExplorationBudget& budget) {
  planning::CompatCache compat(registry);
  std::vector<SubProblemOption> options;
  auto add = [&](planning::Fragment f) {
    auto ids = f.sorted_ids();
    for (const auto& o : options)
      if (o.sorted_ids == ids && o.fragment.goal_sources == f.goal_sources) return;
    options.push_back({std::move(f), std::move(ids)});
  };

  if (sp.depends_on.empty()) {
    for (auto& f : planning::k_best({sp.required_output}, registry, run_inputs, budget.k, filter, budget.max_expansions))
      add(std::move(f));
  } else {
    std::vector<std::pair<DataKindSpec, Source>> with_deps = run_inputs;
    for (const auto& d : sp.depends_on)
      with_deps.push_back({graph.find(d)->required_output, Source::step("@" + d, "")});

    for (const auto& [id, entry] : registry.entries) {
      if (filter && !filter(entry)) continue;
      // Output port producing the goal, cheapest path first.
      const PortSpec* out_port = nullptr;
      std::optional<planning::Path> out_path;
      for (const auto& o : entry.outputs) {
        const auto& path = compat.get(o.data, sp.required_output);
        if (path && (!out_path || path->cost < out_path->cost)) {
          out_port = &o;
          out_path = path;
        }
      }
      if (!out_port) continue;
      // Consume every dependency, each on the first compatible free port.
      std::map<std::string, Source> bindings;
      Rational cost = entry.cost_hint + out_path->cost;
      bool ok = true;
      for (const auto& d : sp.depends_on) {
        const auto& dep_spec = graph.find(d)->required_output;
        bool bound = false;
        for (const auto& in : entry.inputs) {
          if (bindings.count(in.name)) continue;
          const auto& path = compat.get(dep_spec, in.data);
          if (!path) continue;
          Source src = Source::step("@" + d, "");
          src.adapters = path->adapters;
          bindings[in.name] = src;
          cost += path->cost;
          bound = true;
          break;
        }
        ok = ok && bound;
      }
      if (!ok) continue;
      std::vector<DataKindSpec> remaining;
      std::vector<std::string> remaining_ports;
      for (const auto& in : entry.inputs) {
        if (!in.required || bindings.count(in.name)) continue;
        remaining.push_back(in.data);
        remaining_ports.push_back(in.name);
      }
      planning::Fragment f;
      if (!remaining.empty()) {
        // The producer itself may not feed its own inputs.
        auto without_self = [&](const CapabilityEntry& e) { return e.id != entry.id && (!filter || filter(e)); };
        auto sub = planning::k_best(remaining, registry, with_deps, 1, without_self, budget.max_expansions);
        if (sub.empty()) continue;
        f = std::move(sub.front());
        for (std::size_t i = 0; i < remaining_ports.size(); ++i) bindings[remaining_ports[i]] = f.goal_sources[i];
        cost += f.cost;
      }
      planning::Fragment::Step step;
      step.capability = &entry;
      step.bindings = std::move(bindings);
      f.steps.push_back(std::move(step));
      Source goal = Source::step("#" + std::to_string(f.steps.size() - 1), out_port->name);
      goal.adapters = out_path->adapters;
      f.goal_sources = {goal};
      f.cost = cost;
      add(std::move(f));
    }
    // A single dependency may already be the answer up to translation.
    if (sp.depends_on.size() == 1) {
      const auto& d = sp.depends_on.front();
      if (const auto& path = compat.get(graph.find(d)->required_output, sp.required_output)) {
        planning::Fragment f;
        Source src = Source::step("@" + d, "");
        src.adapters = path->adapters;
        f.goal_sources = {src};
        f.cost = path->cost;
        add(std::move(f));
      }
    }
    if (options.empty()) {
      for (auto& f : planning::k_best({sp.required_output}, registry, with_deps, budget.k, filter, budget.max_expansions))
        add(std::move(f));
    }
  }
  std::sort(options.begin(), options.end(), option_less);
  if (options.size() > static_cast<std::size_t>(budget.k)) options.resize(budget.k);
  return options;
}

bool linear_chain(const SubProblemGraph& graph) {
  std::map<std::string, int> dependents;
  for (const auto& sp : graph.sub_problems) {
    if (sp.depends_on.size() > 1) return false;
    for (const auto& d : sp.depends_on) ++dependents[d];
  }
  for (const auto& [_, n] : dependents)
    if (n > 1) return false;
  return graph.terminals().size() == 1;
}

std::set<std::string> frameworks(const CandidateWorkflow& c, const Registry& registry) {
  std::set<std::string> out;
  for (const auto& s : c.steps)
    if (const auto* e = registry.find(s.capability_id)) out.insert(e->framework);
  return out;
}

}  // namespace

WorkflowDesign explore(const SubProblemGraph& graph, const Registry& registry, const ExplorationBudget& budget,
                       const BackendHints* hints) {
  if (budget.k < 1) throw Error(ErrorCode::kConfigError, "exploration budget k must be at least 1");
  auto filter = [&](const CapabilityEntry& e) { return satisfies_hard_constraints(e, graph.intent); };
  auto run_input_specs = run_inputs_for(graph.intent, registry);
  std::vector<std::pair<DataKindSpec, Source>> run_inputs;
  for (const auto& [name, spec] : run_input_specs) run_inputs.push_back({spec, Source::run_input(name)});

  auto order = graph.topological_order();
  std::vector<std::vector<SubProblemOption>> per_sp;
  for (const auto& id : order) {
    const auto& sp = *graph.find(id);
    auto options = options_for(sp, graph, registry, run_inputs, filter, budget);
    if (options.empty()) {
      std::set<DataKindSpec> avail;
      for (const auto& [spec, _] : run_inputs) avail.insert(spec);
      for (const auto& d : sp.depends_on) avail.insert(graph.find(d)->required_output);
      auto blocking = planning::blocking_kinds({sp.required_output}, registry, avail, filter);
      std::vector<std::string> details{"sub_problem: " + id};
      details.insert(details.end(), blocking.begin(), blocking.end());
      throw Error(ErrorCode::kNoPlan,
                  "sub-problem '" + id + "' has no plan; blocking: " + join(blocking, ", "), details);
    }
    per_sp.push_back(std::move(options));
  }

  // Beam over option combinations by summed fragment cost.
  struct Partial {
    std::vector<std::size_t> picks;
    Rational cost;
  };
  const std::size_t beam = std::max<std::size_t>(16, 4 * static_cast<std::size_t>(budget.k));
  std::vector<Partial> partials{{{}, 0}};
  for (const auto& options : per_sp) {
    std::vector<Partial> next;
    for (const auto& p : partials) {
      for (std::size_t i = 0; i < options.size(); ++i) {
        Partial q = p;
        q.picks.push_back(i);
        q.cost += options[i].fragment.cost;
        next.push_back(std::move(q));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Partial& a, const Partial& b) { return a.cost < b.cost; });
    if (next.size() > beam) next.resize(beam);
    partials = std::move(next);
  }

  std::vector<CandidateWorkflow> candidates;
  std::set<std::vector<std::string>> seen;
  for (const auto& p : partials) {
    Merger merger(registry, graph.intent.parameters);
    std::map<std::string, Source> outputs;
    CandidateWorkflow c;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& sp = *graph.find(order[i]);
      auto goals = merger.add(per_sp[i][p.picks[i]].fragment, outputs, sp.parameters);
      outputs[sp.id] = goals.front();
    }
    c.steps = merger.take();
    for (const auto& sp : graph.sub_problems) c.outputs.push_back({sp.id, sp.required_output, outputs.at(sp.id)});
    std::set<std::string> used;
    auto note = [&](const Source& s) {
      if (s.kind == Source::Kind::kRunInput) used.insert(s.ref);
    };
    for (const auto& s : c.steps)
      for (const auto& [_, src] : s.input_bindings) note(src);
    for (const auto& o : c.outputs) note(o.source);
    for (const auto& name : used) c.run_inputs[name] = run_input_specs.at(name);
    c.score = score_candidate(c, registry);
    if (!seen.insert(c.capability_multiset()).second) continue;
    candidates.push_back(std::move(c));
  }

  std::set<std::string> preferred;
  if (hints) preferred.insert(hints->preferred_capabilities.begin(), hints->preferred_capabilities.end());
  auto preference = [&](const CandidateWorkflow& c) {
    int n = 0;
    for (const auto& s : c.steps) n += preferred.count(s.capability_id) ? 1 : 0;
    return -n;
  };
  std::stable_sort(candidates.begin(), candidates.end(), [&](const CandidateWorkflow& a, const CandidateWorkflow& b) {
    Rational neg_ra = -a.score.reliability, neg_rb = -b.score.reliability;
    auto ka = std::make_tuple(a.score.compute_cost, neg_ra, a.score.data_requirements);
    auto kb = std::make_tuple(b.score.compute_cost, neg_rb, b.score.data_requirements);
    if (ka != kb) return ka < kb;
    if (preference(a) != preference(b)) return preference(a) < preference(b);
    return a.capability_multiset() < b.capability_multiset();
  });
  if (candidates.size() > static_cast<std::size_t>(budget.k)) candidates.resize(budget.k);

  bool simple = static_cast<int>(graph.sub_problems.size()) <= budget.direct_max_sub_problems ||
                (budget.linear_chains_direct && linear_chain(graph));
  bool single_framework = std::any_of(candidates.begin(), candidates.end(), [&](const CandidateWorkflow& c) {
    return frameworks(c, registry).size() <= 1;
  });

  WorkflowDesign design;
  design.chosen = candidates.front();
  std::ostringstream why;
  const auto& s = design.chosen.score;
  if (simple && single_framework) {
    design.exploration_mode = ExplorationMode::kDirect;
    why << "Direct: " << graph.sub_problems.size() << " sub-problem(s)"
        << (linear_chain(graph) ? " in a linear chain" : "") << ", satisfiable within one framework. ";
    why << "Chosen plan: " << design.chosen.steps.size() << " step(s), cost " << describe(s.compute_cost)
        << ", reliability " << describe(s.reliability) << ".";
  } else {
    design.exploration_mode = ExplorationMode::kComparative;
    design.alternatives.assign(candidates.begin() + 1, candidates.end());
    auto fw = frameworks(design.chosen, registry);
    why << "Comparative: " << candidates.size() << " distinct candidate(s) ranked by (compute cost, reliability, "
        << "data inputs). Chosen: cost " << describe(s.compute_cost) << ", reliability " << describe(s.reliability)
        << ", " << s.data_requirements << " data input(s), frameworks {" << join({fw.begin(), fw.end()}, ", ") << "}.";
    for (std::size_t i = 0; i < design.alternatives.size(); ++i) {
      const auto& a = design.alternatives[i].score;
      why << " Alternative " << i + 1 << ": cost " << describe(a.compute_cost) << ", reliability "
          << describe(a.reliability) << ", " << a.data_requirements << " data input(s).";
    }
  }
  design.rationale = why.str();
  if (hints && !hints->rationale.empty()) design.rationale += " Backend note: " + hints->rationale;
  return design;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<std::string> ValidationReport::messages() const {
  std::vector<std::string> out;
  for (const auto& v : violations) out.push_back(v.kind + ": " + v.message);
  return out;
}

Json to_json(const ValidationReport& report) {
  Json vs = Json::array();
  for (const auto& v : report.violations) vs.push_back({{"kind", v.kind}, {"message", v.message}, {"steps", v.steps}});
  return {{"valid", report.valid()}, {"violations", vs}};
}

namespace {

// Strongly connected components with more than one member, or self loops.
std::vector<std::vector<std::string>> cycles(const std::map<std::string, std::set<std::string>>& edges) {
  std::map<std::string, int> index, low;
  std::vector<std::string> stack;
  std::set<std::string> on_stack;
  std::vector<std::vector<std::string>> out;
  int counter = 0;
  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    auto it = edges.find(v);
    if (it != edges.end()) {
      for (const auto& w : it->second) {
        if (!index.count(w)) {
          visit(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> comp;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        comp.push_back(w);
      } while (w != v);
      bool self = it != edges.end() && it->second.count(v);
      if (comp.size() > 1 || self) {
        std::sort(comp.begin(), comp.end());
        out.push_back(comp);
      }
    }
  };
  for (const auto& [v, _] : edges)
    if (!index.count(v)) visit(v);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ValidationReport validate_candidate(const CandidateWorkflow& c, const Registry& registry) {
  ValidationReport report;
  auto add = [&](std::string kind, std::string message, std::vector<std::string> steps = {}) {
    report.violations.push_back({std::move(kind), std::move(message), std::move(steps)});
  };
  std::map<std::string, const WorkflowStep*> by_id;
  for (const auto& s : c.steps) {
    if (!by_id.emplace(s.id, &s).second) add("duplicate-step-id", "step id '" + s.id + "' is used twice", {s.id});
    if (!registry.find(s.capability_id))
      add("unknown-capability", "step '" + s.id + "' uses unknown capability '" + s.capability_id + "'", {s.id});
  }

  // Resolves the kind a source delivers after its adapters.
  auto resolve = [&](const Source& src, const std::string& where, std::optional<DataKindSpec>& out) {
    out.reset();
    DataKindSpec spec;
    switch (src.kind) {
      case Source::Kind::kStepOutput: {
        auto it = by_id.find(src.ref);
        if (it == by_id.end()) {
          add("unknown-step", where + " references unknown step '" + src.ref + "'");
          return;
        }
        const auto* cap = registry.find(it->second->capability_id);
        if (!cap) return;
        const auto* port = cap->find_output(src.port);
        if (!port) {
          add("unknown-port", where + " references missing output '" + src.ref + "." + src.port + "'", {src.ref});
          return;
        }
        spec = port->data;
        break;
      }
      case Source::Kind::kRunInput: {
        auto it = c.run_inputs.find(src.ref);
        if (it == c.run_inputs.end()) {
          add("unknown-run-input", where + " references undeclared run input '" + src.ref + "'");
          return;
        }
        spec = it->second;
        break;
      }
      case Source::Kind::kParam:
        if (!Json::accept(src.ref)) {
          add("bad-param", where + " literal is not valid JSON");
          return;
        }
        return;  // literals adopt the consuming port's kind
    }
    for (const auto& a : src.adapters) {
      const auto* t = registry.find_translation(a);
      if (!t) {
        add("bad-adapter", where + " uses unknown adapter '" + a + "'");
        return;
      }
      if (t->from != spec) {
        add("bad-adapter", where + " applies '" + a + "' to " + spec.label() + " (expects " + t->from.label() + ")");
        return;
      }
      spec = t->to;
    }
    out = spec;
  };

  std::map<std::string, std::set<std::string>> edges;
  for (const auto& s : c.steps) {
    edges[s.id];
    const auto* cap = registry.find(s.capability_id);
    for (const auto& [port, src] : s.input_bindings) {
      if (src.kind == Source::Kind::kStepOutput && by_id.count(src.ref)) edges[src.ref].insert(s.id);
      if (!cap) continue;
      const auto* in = cap->find_input(port);
      std::string where = "step '" + s.id + "' input '" + port + "'";
      if (!in) {
        add("unknown-port", where + " is not an input of " + cap->id, {s.id});
        continue;
      }
      std::optional<DataKindSpec> spec;
      resolve(src, where, spec);
      if (spec && std::holds_alternative<Incompatible>(check_compatibility(*spec, in->data, registry))) {
        add("incompatible-kinds",
            where + " receives " + spec->label() + " but expects " + in->data.label() + " and no translation exists",
            {s.id});
      }
    }
    if (cap) {
      for (const auto& in : cap->inputs) {
        if (in.required && !s.input_bindings.count(in.name))
          add("unbound-port", "step '" + s.id + "' leaves required input '" + in.name + "' unbound", {s.id});
      }
    }
  }
  for (const auto& comp : cycles(edges))
    add("cycle", "data flow cycle [" + join(comp, ", ") + "]", comp);

  for (const auto& o : c.outputs) {
    std::optional<DataKindSpec> spec;
    resolve(o.source, "output '" + o.sub_problem + "'", spec);
    if (spec && std::holds_alternative<Incompatible>(check_compatibility(*spec, o.data, registry)))
      add("uncovered-output", "output '" + o.sub_problem + "' delivers " + spec->label() + ", not " + o.data.label());
  }
  return report;
}

ValidationReport validate_design(const WorkflowDesign& design, const Registry& registry) {
  auto report = validate_candidate(design.chosen, registry);
  auto chosen_set = design.chosen.capability_multiset();
  for (std::size_t i = 0; i < design.alternatives.size(); ++i) {
    auto prefix = "alternative " + std::to_string(i + 1) + ": ";
    for (auto v : validate_candidate(design.alternatives[i], registry).violations) {
      v.message = prefix + v.message;
      report.violations.push_back(std::move(v));
    }
    if (design.alternatives[i].capability_multiset() == chosen_set)
      report.violations.push_back({"duplicate-alternative", prefix + "same capability multiset as the chosen plan", {}});
  }
  return report;
}

// ---------------------------------------------------------------------------
// DOT

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string candidate_to_dot(const CandidateWorkflow& c, const std::string& name) {
  std::ostringstream out;
  out << "digraph " << quote(name) << " {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& s : c.steps) out << "  " << quote(s.id) << " [label=" << quote(s.id + '\n' + s.capability_id) << "];\n";
  for (const auto& s : c.steps) {
    for (const auto& [port, src] : s.input_bindings) {
      if (src.kind != Source::Kind::kStepOutput) continue;
      out << "  " << quote(src.ref) << " -> " << quote(s.id) << " [label=" << quote(port);
      if (!src.adapters.empty()) out << ", style=dashed, xlabel=" << quote(join(src.adapters, ","));
      out << "];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string sub_problem_graph_to_dot(const SubProblemGraph& graph) {
  std::ostringstream out;
  out << "digraph \"sub_problems\" {\n  rankdir=LR;\n  node [shape=ellipse];\n";
  for (const auto& sp : graph.sub_problems)
    out << "  " << quote(sp.id) << " [label=" << quote(sp.id + '\n' + sp.required_output.kind) << "];\n";
  for (const auto& sp : graph.sub_problems)
    for (const auto& d : sp.depends_on) out << "  " << quote(d) << " -> " << quote(sp.id) << ";\n";
  out << "}\n";
  return out.str();
}

}  // namespace arachnet
