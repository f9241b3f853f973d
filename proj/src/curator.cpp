#include "arachnet/curator.hpp"

#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace arachnet {

namespace jr = jsonread;

// ---------------------------------------------------------------------------
// Traces

RunTrace make_trace(const std::string& run_id, const ExecutablePlan& plan, const ExecutionResult& result) {
  RunTrace trace;
  trace.run_id = run_id;
  trace.plan_id = plan.plan_id;
  trace.success = result.success;
  for (const auto& s : plan.steps) {
    TraceStep t;
    t.step_id = s.id;
    t.capability_id = s.capability_id;
    t.is_adapter = s.is_adapter;
    t.bindings = s.input_bindings;
    t.params = s.params;
    for (const auto& [port, src] : s.input_bindings) {
      if (src.kind == Source::Kind::kStepOutput) {
        auto it = result.step_outputs.find(src.ref + "." + src.port);
        if (it != result.step_outputs.end()) t.input_digests[port] = it->second.digest;
      } else if (src.kind == Source::Kind::kRunInput) {
        auto it = result.run_inputs.find(src.ref);
        if (it != result.run_inputs.end()) t.input_digests[port] = it->second;
      }
    }
    for (const auto& o : s.outputs) {
      auto it = result.step_outputs.find(s.id + "." + o.name);
      if (it != result.step_outputs.end()) t.output_digests[o.name] = it->second.digest;
    }
    trace.steps.push_back(std::move(t));
  }
  return trace;
}

Json to_json(const RunTrace& trace) {
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json bindings = Json::object();
    for (const auto& [port, src] : s.bindings) bindings[port] = to_json(src);
    steps.push_back({{"step_id", s.step_id},
                     {"capability_id", s.capability_id},
                     {"is_adapter", s.is_adapter},
                     {"bindings", bindings},
                     {"params", s.params},
                     {"input_digests", s.input_digests},
                     {"output_digests", s.output_digests}});
  }
  return {{"run_id", trace.run_id}, {"plan_id", trace.plan_id}, {"success", trace.success}, {"steps", steps}};
}

RunTrace run_trace_from_json(const Json& doc) {
  const std::string root = "trace";
  jr::check_keys(doc, {"run_id", "plan_id", "success", "steps"}, root);
  RunTrace t;
  t.run_id = jr::string_field(doc, "run_id", root);
  t.plan_id = jr::string_field(doc, "plan_id", root);
  t.success = jr::bool_field(doc, "success", root);
  const auto& steps = jr::array_field(doc, "steps", root);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto w = root + ".steps[" + std::to_string(i) + "]";
    const auto& s = steps[i];
    TraceStep ts;
    ts.step_id = jr::string_field(s, "step_id", w);
    ts.capability_id = jr::string_field(s, "capability_id", w);
    ts.is_adapter = jr::bool_field(s, "is_adapter", w, false);
    for (const auto& [port, src] : jr::field(s, "bindings", w).items())
      ts.bindings[port] = source_from_json(src, w + ".bindings." + port);
    ts.params = jr::string_map(s, "params", w);
    ts.input_digests = jr::string_map(s, "input_digests", w);
    ts.output_digests = jr::string_map(s, "output_digests", w);
    t.steps.push_back(std::move(ts));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Patterns

namespace {

Json definition_json(const std::vector<std::string>& chain, const CompositeDefinition& def,
                     const std::map<std::string, std::string>& params) {
  Json bindings = Json::array();
  for (const auto& b : def.bindings) {
    Json jb{{"member", b.member}, {"port", b.port}};
    if (b.source_member < 0) {
      jb["from_input"] = b.source_port;
    } else {
      jb["from_member"] = b.source_member;
      jb["from_port"] = b.source_port;
    }
    bindings.push_back(jb);
  }
  Json outputs = Json::array();
  for (const auto& [name, src] : def.outputs) outputs.push_back({{"name", name}, {"member", src.first}, {"port", src.second}});
  return {{"chain", chain}, {"bindings", bindings}, {"outputs", outputs}, {"params", params}};
}

// A chain instance in one trace, turned into a composite definition.
struct Candidate {
  std::vector<const TraceStep*> members;
  std::vector<std::string> chain;
  CompositeDefinition def;
  std::map<std::string, std::string> params;
  std::map<std::string, std::pair<int, std::string>> input_origin;  // composite input -> (member, port)
  std::string key;
};

std::optional<Candidate> describe(const std::vector<const TraceStep*>& members, const Registry& registry) {
  Candidate c;
  c.members = members;
  std::map<std::string, int> position;
  for (std::size_t i = 0; i < members.size(); ++i) {
    position[members[i]->step_id] = static_cast<int>(i);
    c.chain.push_back(members[i]->capability_id);
  }
  std::map<std::string, int> port_uses;
  for (const auto* m : members)
    for (const auto& [port, src] : m->bindings)
      if (!(src.kind == Source::Kind::kStepOutput && position.count(src.ref))) ++port_uses[port];
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (const auto& [port, src] : members[i]->bindings) {
      if (src.kind == Source::Kind::kParam) return std::nullopt;
      CompositeBinding b;
      b.member = static_cast<int>(i);
      b.port = port;
      if (src.kind == Source::Kind::kStepOutput && position.count(src.ref)) {
        if (!src.adapters.empty()) return std::nullopt;
        b.source_member = position[src.ref];
        b.source_port = src.port;
      } else {
        b.source_member = -1;
        b.source_port = port_uses[port] > 1 ? port + "_" + std::to_string(i) : port;
        c.input_origin[b.source_port] = {b.member, port};
      }
      c.def.bindings.push_back(b);
    }
    for (const auto& [k, v] : members[i]->params) {
      auto [it, fresh] = c.params.emplace(k, v);
      if (!fresh && it->second != v) return std::nullopt;
    }
  }
  std::sort(c.def.bindings.begin(), c.def.bindings.end());
  const auto* last = registry.find(c.chain.back());
  if (!last) return std::nullopt;
  for (const auto& o : last->outputs) c.def.outputs.push_back({o.name, {static_cast<int>(members.size()) - 1, o.name}});
  c.def.chain = c.chain;
  c.key = canonical_dump(definition_json(c.chain, c.def, c.params));
  return c;
}

CapabilityEntry draft_entry(const Candidate& c, const Registry& registry) {
  CapabilityEntry e;
  e.id = composite_id(c.chain, registry);
  e.framework = "curated";
  e.description = "Composite chain " + join(c.chain, " -> ") + ".";
  e.cost_hint = 0;
  e.reliability = 1;
  std::set<std::string> constraint_seen;
  for (const auto& id : c.chain) {
    const auto* member = registry.find(id);
    e.cost_hint += member->cost_hint;
    e.reliability *= member->reliability;
    for (const auto& k : member->constraints)
      if (constraint_seen.insert(canonical_dump(to_json(k))).second) e.constraints.push_back(k);
  }
  for (const auto& [name, origin] : c.input_origin) {
    const auto* member = registry.find(c.chain[origin.first]);
    const auto* port = member->find_input(origin.second);
    PortSpec p = port ? *port : PortSpec{};
    p.name = name;
    e.inputs.push_back(p);
  }
  e.outputs = registry.find(c.chain.back())->outputs;
  e.provenance = Provenance::kCurated;
  e.version = 1;
  e.parameters = c.params;
  e.composite = c.def;
  return e;
}

}  // namespace

std::string CompositePattern::key() const { return canonical_dump(definition_json(chain, definition, params)); }

Json to_json(const CompositePattern& p) {
  Json occ = Json::object();
  for (const auto& [run, o] : p.occurrences)
    occ[run] = {{"step_ids", o.step_ids}, {"input_digests", o.input_digests}, {"output_digests", o.output_digests}};
  return {{"chain", p.chain},
          {"support", p.support},
          {"key_digest", sha256_hex(p.key())},
          {"occurrences", occ},
          {"proposed_entry", to_json(p.proposed_entry)}};
}

std::string composite_id(const std::vector<std::string>& chain, const Registry& registry) {
  std::vector<std::string> tokens;
  for (const auto& id : chain) {
    const auto* e = registry.find(id);
    std::string name = e ? e->function_name() : id.substr(id.find('.') + 1);
    std::string token = name.substr(0, name.find('_'));
    if (token.size() > 6) token = token.substr(0, 3);
    if (tokens.empty() || tokens.back() != token) tokens.push_back(token);
  }
  return "curated." + join(tokens, "_") + "_v1";
}

std::vector<CompositePattern> mine_patterns(const std::vector<RunTrace>& traces, const Registry& registry,
                                            int min_support, int min_len) {
  std::set<std::string> registered;
  for (const auto& [id, e] : registry.entries)
    if (e.composite) registered.insert(canonical_dump(definition_json(e.composite->chain, *e.composite, e.parameters)));

  struct Found {
    Candidate candidate;
    std::map<std::string, ChainOccurrence> occurrences;
    std::map<std::string, std::set<std::string>> extensions;  // run -> extension keys
  };
  std::map<std::string, Found> found;
  std::set<std::string> seen_runs;

  for (const auto& trace : traces) {
    if (!trace.success || !seen_runs.insert(trace.run_id).second) continue;
    std::map<std::string, const TraceStep*> by_id;
    for (const auto& s : trace.steps) by_id[s.step_id] = &s;
    auto eligible = [&](const TraceStep& s) {
      const auto* e = registry.find(s.capability_id);
      return !s.is_adapter && e && !e->composite && !s.output_digests.empty();
    };
    // consumers[p]: eligible steps reading p's output directly
    std::map<std::string, std::vector<const TraceStep*>> consumers, producers;
    for (const auto& s : trace.steps) {
      if (!eligible(s)) continue;
      std::set<std::string> feeders;
      for (const auto& [_, src] : s.bindings)
        if (src.kind == Source::Kind::kStepOutput && src.adapters.empty() && by_id.count(src.ref) &&
            eligible(*by_id[src.ref]))
          feeders.insert(src.ref);
      for (const auto& f : feeders) {
        consumers[f].push_back(&s);
        producers[s.step_id].push_back(by_id[f]);
      }
    }

    std::map<std::string, std::set<std::string>> run_extensions;
    std::map<std::string, Candidate> run_candidates;
    std::function<void(std::vector<const TraceStep*>&)> walk = [&](std::vector<const TraceStep*>& path) {
      if (static_cast<int>(path.size()) >= min_len) {
        auto c = describe(path, registry);
        if (c) {
          auto& ext = run_extensions[c->key];
          for (const auto* next : consumers[path.back()->step_id]) {
            auto longer = path;
            longer.push_back(next);
            if (auto l = describe(longer, registry)) ext.insert(l->key);
          }
          for (const auto* prev : producers[path.front()->step_id]) {
            std::vector<const TraceStep*> longer{prev};
            longer.insert(longer.end(), path.begin(), path.end());
            if (auto l = describe(longer, registry)) ext.insert(l->key);
          }
          run_candidates.emplace(c->key, *c);
        }
      }
      for (const auto* next : consumers[path.back()->step_id]) {
        path.push_back(next);
        walk(path);
        path.pop_back();
      }
    };
    for (const auto& s : trace.steps) {
      if (!eligible(s)) continue;
      std::vector<const TraceStep*> path{&s};
      walk(path);
    }

    for (auto& [key, c] : run_candidates) {
      auto& f = found[key];
      if (f.occurrences.empty()) f.candidate = c;
      ChainOccurrence occ;
      for (const auto* m : c.members) occ.step_ids.push_back(m->step_id);
      for (const auto& [name, origin] : c.input_origin) {
        const auto* member = c.members[origin.first];
        auto it = member->input_digests.find(origin.second);
        if (it != member->input_digests.end()) occ.input_digests[name] = it->second;
      }
      for (const auto& [name, src] : c.def.outputs) {
        const auto* member = c.members[src.first];
        auto it = member->output_digests.find(src.second);
        if (it != member->output_digests.end()) occ.output_digests[name] = it->second;
      }
      f.occurrences[trace.run_id] = occ;
      f.extensions[trace.run_id] = run_extensions[key];
    }
  }

  std::vector<CompositePattern> out;
  for (const auto& [key, f] : found) {
    if (static_cast<int>(f.occurrences.size()) < min_support || registered.count(key)) continue;
    std::optional<std::set<std::string>> common;
    for (const auto& [run, ext] : f.extensions) {
      if (!common) {
        common = ext;
        continue;
      }
      std::set<std::string> both;
      std::set_intersection(common->begin(), common->end(), ext.begin(), ext.end(), std::inserter(both, both.end()));
      common = both;
    }
    if (common && !common->empty()) continue;  // every supporting run extends it the same way
    CompositePattern p;
    p.chain = f.candidate.chain;
    p.definition = f.candidate.def;
    p.params = f.candidate.params;
    p.support = static_cast<int>(f.occurrences.size());
    p.occurrences = f.occurrences;
    p.proposed_entry = draft_entry(f.candidate, registry);
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const CompositePattern& a, const CompositePattern& b) {
    if (a.support != b.support) return a.support > b.support;
    if (a.chain != b.chain) return a.chain < b.chain;
    return a.key() < b.key();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Composite execution

CompositeAdapter::CompositeAdapter(RegistryPtr registry, AdapterSet base)
    : registry_(std::move(registry)), base_(std::move(base)) {}

bool CompositeAdapter::supports(const std::string& capability_id) const {
  const auto* e = registry_->find(capability_id);
  return e && e->composite;
}

std::vector<std::string> CompositeAdapter::supported_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, e] : registry_->entries)
    if (e.composite) out.push_back(id);
  return out;
}

PortValues CompositeAdapter::invoke(const std::string& capability_id, const PortValues& inputs,
                                    const Params& params) const {
  const auto* entry = registry_->find(capability_id);
  if (!entry || !entry->composite) throw Error(ErrorCode::kMissingAdapter, "no composite " + capability_id);
  const auto& def = *entry->composite;
  std::vector<PortValues> produced;
  for (std::size_t i = 0; i < def.chain.size(); ++i) {
    const auto& member_id = def.chain[i];
    const auto* member = registry_->find(member_id);
    const auto* adapter = base_.find(member_id);
    if (!member || !adapter) throw Error(ErrorCode::kMissingAdapter, "no adapter supports member " + member_id);
    PortValues in;
    for (const auto& b : def.bindings) {
      if (b.member != static_cast<int>(i)) continue;
      if (b.source_member < 0) {
        auto it = inputs.find(b.source_port);
        if (it == inputs.end()) throw Error(ErrorCode::kAdapterMismatch, "composite input '" + b.source_port + "' missing");
        in[b.port] = it->second;
      } else {
        in[b.port] = produced.at(b.source_member).at(b.source_port);
      }
    }
    Params member_params;
    for (const auto& [k, v] : params)
      if (member->parameters.count(k)) member_params[k] = v;
    produced.push_back(adapter->invoke(member_id, in, member_params));
  }
  PortValues out;
  for (const auto& [name, src] : def.outputs) out[name] = produced.at(src.first).at(src.second);
  return out;
}

// ---------------------------------------------------------------------------
// Validation and promotion

Json to_json(const ReplayVerdict& v) {
  Json replays = Json::array();
  for (const auto& r : v.replays)
    replays.push_back(
        {{"run_id", r.run_id}, {"port", r.port}, {"recorded", r.recorded}, {"replayed", r.replayed}, {"match", r.match()}});
  return {{"pattern_key_digest", sha256_hex(v.pattern_key)}, {"passed", v.passed}, {"replays", replays}, {"reason", v.reason}};
}

ReplayVerdict validate_composite(const CompositePattern& pattern, const std::map<std::string, const BlobStore*>& blobs,
                                 const Registry& registry, const AdapterSet& base) {
  auto scratch = std::make_shared<Registry>(registry);
  scratch->entries[pattern.proposed_entry.id] = pattern.proposed_entry;
  AdapterSet adapters;
  adapters.add(std::make_shared<CompositeAdapter>(scratch, base));

  const auto& entry = pattern.proposed_entry;
  ExecutablePlan plan;
  PlanStep step;
  step.id = "replay";
  step.capability_id = entry.id;
  step.framework = entry.framework;
  step.params = pattern.params;
  step.outputs = entry.outputs;
  step.reliability = entry.reliability;
  for (const auto& in : entry.inputs) {
    step.input_bindings[in.name] = Source::run_input(in.name);
    plan.run_inputs[in.name] = in.data;
  }
  plan.steps.push_back(step);
  plan.plan_id = plan.compute_id();

  // Runs whose recorded inputs and outputs are all still stored.
  std::vector<std::pair<std::string, std::map<std::string, DataValue>>> usable;
  for (const auto& [run, occ] : pattern.occurrences) {
    auto store = blobs.find(run);
    if (store == blobs.end() || !store->second) continue;
    std::map<std::string, DataValue> inputs;
    bool complete = occ.input_digests.size() == entry.inputs.size() && occ.output_digests.size() == entry.outputs.size();
    for (const auto& [name, digest] : occ.input_digests) {
      if (!store->second->get(digest)) {
        complete = false;
        break;
      }
      inputs[name] = load_value(*store->second, digest);
    }
    if (complete) usable.emplace_back(run, std::move(inputs));
  }
  if (static_cast<int>(usable.size()) < kMinReplayRuns)
    throw Error(ErrorCode::kReplayError, "recorded blobs available for " + std::to_string(usable.size()) +
                                             " supporting run(s); replay needs " + std::to_string(kMinReplayRuns));

  ReplayVerdict verdict;
  verdict.pattern_key = pattern.key();
  verdict.passed = true;
  for (const auto& [run, inputs] : usable) {
    MemoryBlobStore scratch_blobs;
    auto result = execute(plan, adapters, inputs, scratch_blobs);
    for (const auto& [port, recorded] : pattern.occurrences.at(run).output_digests) {
      ReplayRecord r{run, port, recorded, ""};
      auto it = result.step_outputs.find("replay." + port);
      if (it != result.step_outputs.end()) r.replayed = it->second.digest;
      if (!r.match() && verdict.passed) {
        verdict.passed = false;
        verdict.reason = "run " + run + " port " + port + ": recorded " + r.recorded + ", replayed " +
                         (r.replayed.empty() ? "nothing (" + result.reason + ")" : r.replayed);
      }
      verdict.replays.push_back(r);
    }
  }
  return verdict;
}

std::string composite_doc(const CapabilityEntry& e) {
  std::string md = "# " + e.id + "\n\n" + e.description + "\n\n## Chain\n\n";
  if (e.composite)
    for (std::size_t i = 0; i < e.composite->chain.size(); ++i)
      md += std::to_string(i + 1) + ". `" + e.composite->chain[i] + "`\n";
  md += "\n## Inputs\n\n";
  for (const auto& p : e.inputs) md += "- `" + p.name + "`: " + p.data.label() + "\n";
  md += "\n## Outputs\n\n";
  for (const auto& p : e.outputs) md += "- `" + p.name + "`: " + p.data.label() + "\n";
  md += "\nCost hint " + to_string(e.cost_hint) + ", reliability " + to_string(e.reliability) +
        ". Provenance: curated, validated by replay.\n";
  return md;
}

int promote(const CompositePattern& pattern, const ReplayVerdict& verdict, RegistryStore& store) {
  if (!verdict.passed || verdict.pattern_key != pattern.key())
    throw Error(ErrorCode::kPreconditionFailed, "composite " + pattern.proposed_entry.id +
                                                    " has no passing replay verdict");
  const auto& entry = pattern.proposed_entry;
  if (store.load_latest()->find(entry.id))
    throw Error(ErrorCode::kIdCollision, "registry already has an entry '" + entry.id + "'");
  return store.commit_new_version([&](const std::filesystem::path& dir) {
    if (std::filesystem::exists(dir / "capabilities" / "curated" / (entry.id + ".json")))
      throw Error(ErrorCode::kIdCollision, "registry already has an entry '" + entry.id + "'");
    std::filesystem::create_directories(dir / "capabilities" / "curated");
    std::filesystem::create_directories(dir / "docs" / "registry");
    write_json_file(dir / "capabilities" / "curated" / (entry.id + ".json"), to_json(entry));
    write_text_file(dir / "docs" / "registry" / (entry.id + ".md"), composite_doc(entry));
  });
}

}  // namespace arachnet
