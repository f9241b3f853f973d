#include "arachnet/solutionweaver.hpp"

#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"

#include <algorithm>
#include <sstream>

namespace arachnet {

namespace jr = jsonread;

std::string_view to_string(QualityCheckKind kind) {
  switch (kind) {
    case QualityCheckKind::kSchema: return "schema";
    case QualityCheckKind::kNonempty: return "nonempty";
    case QualityCheckKind::kRange: return "range";
    case QualityCheckKind::kConsistency: return "cross_source_consistency";
  }
  return "schema";
}

std::string_view to_string(Severity severity) { return severity == Severity::kError ? "error" : "warn"; }

const PlanStep* ExecutablePlan::find(std::string_view id) const {
  for (const auto& s : steps)
    if (s.id == id) return &s;
  return nullptr;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json port_ref_json(const PortRef& r) { return {{"step", r.step}, {"port", r.port}}; }

PortRef port_ref_from(const Json& doc, const std::string& where) {
  jr::check_keys(doc, {"step", "port"}, where);
  return {jr::string_field(doc, "step", where), jr::string_field(doc, "port", where)};
}

DataKindSpec kind_from(const Json& doc, const std::string& where) {
  try {
    return data_kind_from_json(doc);
  } catch (const Error& e) {
    jr::fail(where, e.what());
  }
}

Json check_json(const QualityCheck& c) {
  Json doc{{"id", c.id},
           {"target", port_ref_json(c.target)},
           {"kind", to_string(c.kind)},
           {"severity", to_string(c.severity)}};
  if (c.kind == QualityCheckKind::kRange) {
    doc["min"] = to_string(c.min);
    doc["max"] = to_string(c.max);
    if (!c.column.empty()) doc["column"] = c.column;
  }
  if (c.kind == QualityCheckKind::kConsistency) {
    doc["other"] = port_ref_json(c.other);
    doc["tolerance"] = to_string(c.tolerance);
    doc["tolerance_mode"] = c.tolerance_mode == ToleranceMode::kRelative ? "relative" : "absolute_seconds";
  }
  return doc;
}

QualityCheck check_from(const Json& doc, const std::string& where) {
  jr::check_keys(doc, {"id", "target", "kind", "severity", "min", "max", "column", "other", "tolerance", "tolerance_mode"},
                 where);
  QualityCheck c;
  c.id = jr::string_field(doc, "id", where);
  c.target = port_ref_from(jr::field(doc, "target", where), where + ".target");
  auto kind = jr::string_field(doc, "kind", where);
  if (kind == "schema") c.kind = QualityCheckKind::kSchema;
  else if (kind == "nonempty") c.kind = QualityCheckKind::kNonempty;
  else if (kind == "range") c.kind = QualityCheckKind::kRange;
  else if (kind == "cross_source_consistency") c.kind = QualityCheckKind::kConsistency;
  else jr::fail(where + ".kind", "schema|nonempty|range|cross_source_consistency");
  auto severity = jr::string_field(doc, "severity", where);
  if (severity != "error" && severity != "warn") jr::fail(where + ".severity", "error|warn");
  c.severity = severity == "error" ? Severity::kError : Severity::kWarn;
  if (c.kind == QualityCheckKind::kRange) {
    c.min = jr::rational_field(doc, "min", where);
    c.max = jr::rational_field(doc, "max", where);
    c.column = jr::opt_string(doc, "column", where);
    if (c.min > c.max) jr::fail(where + ".min", "min exceeds max");
  }
  if (c.kind == QualityCheckKind::kConsistency) {
    c.other = port_ref_from(jr::field(doc, "other", where), where + ".other");
    c.tolerance = jr::rational_field(doc, "tolerance", where);
    if (c.tolerance < 0) jr::fail(where + ".tolerance", "tolerance must be non-negative");
    auto mode = jr::opt_string(doc, "tolerance_mode", where, "relative");
    if (mode != "relative" && mode != "absolute_seconds") jr::fail(where + ".tolerance_mode", "relative|absolute_seconds");
    c.tolerance_mode = mode == "relative" ? ToleranceMode::kRelative : ToleranceMode::kAbsoluteSeconds;
  }
  return c;
}

Json body_json(const ExecutablePlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps) {
    Json bindings = Json::object();
    for (const auto& [port, src] : s.input_bindings) bindings[port] = to_json(src);
    Json outputs = Json::array();
    for (const auto& o : s.outputs) outputs.push_back({{"name", o.name}, {"data", to_json(o.data)}});
    Json step{{"id", s.id},
              {"capability_id", s.capability_id},
              {"is_adapter", s.is_adapter},
              {"framework", s.framework},
              {"input_bindings", bindings},
              {"params", s.params},
              {"outputs", outputs},
              {"reliability", to_string(s.reliability)}};
    if (s.translation) step["translation"] = to_json(*s.translation);
    steps.push_back(std::move(step));
  }
  Json checks = Json::array();
  for (const auto& c : plan.checks) checks.push_back(check_json(c));
  Json manifest = Json::array();
  for (const auto& m : plan.outputs_manifest)
    manifest.push_back({{"sub_problem", m.sub_problem}, {"source", to_json(m.source)}, {"data", to_json(m.data)}});
  Json run_inputs = Json::object();
  for (const auto& [name, spec] : plan.run_inputs) run_inputs[name] = to_json(spec);
  return {{"plan_schema_version", plan.plan_schema_version},
          {"steps", steps},
          {"checks", checks},
          {"outputs_manifest", manifest},
          {"confidence", to_string(plan.confidence)},
          {"run_inputs", run_inputs}};
}

}  // namespace

std::string ExecutablePlan::compute_id() const { return digest_of(body_json(*this)); }

Json to_json(const ExecutablePlan& plan) {
  auto doc = body_json(plan);
  doc["plan_id"] = plan.plan_id;
  return doc;
}

ExecutablePlan executable_plan_from_json(const Json& doc) {
  const std::string root = "stage3";
  jr::check_keys(doc, {"plan_schema_version", "plan_id", "steps", "checks", "outputs_manifest", "confidence", "run_inputs"},
                 root);
  ExecutablePlan plan;
  const auto& version = jr::field(doc, "plan_schema_version", root);
  if (!version.is_number_integer() || version.get<int>() != kPlanSchemaVersion)
    jr::fail(root + ".plan_schema_version", "unsupported plan schema version");
  plan.plan_id = jr::string_field(doc, "plan_id", root);
  const auto& steps = jr::array_field(doc, "steps", root);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto w = root + ".steps[" + std::to_string(i) + "]";
    const auto& d = steps[i];
    jr::check_keys(d, {"id", "capability_id", "is_adapter", "framework", "input_bindings", "params", "outputs",
                       "reliability", "translation"},
                   w);
    PlanStep s;
    s.id = jr::string_field(d, "id", w);
    s.capability_id = jr::string_field(d, "capability_id", w);
    s.is_adapter = jr::bool_field(d, "is_adapter", w, false);
    s.framework = jr::opt_string(d, "framework", w);
    if (d.contains("input_bindings")) {
      jr::expect_object(d["input_bindings"], w + ".input_bindings");
      for (const auto& [port, src] : d["input_bindings"].items())
        s.input_bindings[port] = source_from_json(src, w + ".input_bindings." + port);
    }
    s.params = jr::string_map(d, "params", w);
    const auto& outs = jr::array_field(d, "outputs", w);
    for (std::size_t j = 0; j < outs.size(); ++j) {
      auto ow = w + ".outputs[" + std::to_string(j) + "]";
      jr::check_keys(outs[j], {"name", "data"}, ow);
      PortSpec p;
      p.name = jr::string_field(outs[j], "name", ow);
      p.data = kind_from(jr::field(outs[j], "data", ow), ow + ".data");
      p.required = false;
      s.outputs.push_back(std::move(p));
    }
    s.reliability = jr::rational_field(d, "reliability", w);
    if (d.contains("translation")) {
      const auto& t = d["translation"];
      auto tw = w + ".translation";
      jr::check_keys(t, {"from", "to", "adapter_id", "cost", "lossy"}, tw);
      Translation tr;
      tr.from = kind_from(jr::field(t, "from", tw), tw + ".from");
      tr.to = kind_from(jr::field(t, "to", tw), tw + ".to");
      tr.adapter_id = jr::string_field(t, "adapter_id", tw);
      tr.cost = jr::rational_field(t, "cost", tw);
      tr.lossy = jr::bool_field(t, "lossy", tw, false);
      s.translation = tr;
    }
    plan.steps.push_back(std::move(s));
  }
  const auto& checks = jr::array_field(doc, "checks", root);
  for (std::size_t i = 0; i < checks.size(); ++i)
    plan.checks.push_back(check_from(checks[i], root + ".checks[" + std::to_string(i) + "]"));
  const auto& manifest = jr::array_field(doc, "outputs_manifest", root);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto w = root + ".outputs_manifest[" + std::to_string(i) + "]";
    jr::check_keys(manifest[i], {"sub_problem", "source", "data"}, w);
    ManifestEntry m;
    m.sub_problem = jr::opt_string(manifest[i], "sub_problem", w);
    m.source = source_from_json(jr::field(manifest[i], "source", w), w + ".source");
    m.data = kind_from(jr::field(manifest[i], "data", w), w + ".data");
    plan.outputs_manifest.push_back(std::move(m));
  }
  plan.confidence = jr::rational_field(doc, "confidence", root);
  if (plan.confidence <= 0 || plan.confidence > 1) jr::fail(root + ".confidence", "confidence must be in (0,1]");
  if (doc.contains("run_inputs")) {
    jr::expect_object(doc["run_inputs"], root + ".run_inputs");
    for (const auto& [name, spec] : doc["run_inputs"].items())
      plan.run_inputs[name] = kind_from(spec, root + ".run_inputs." + name);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// compile

namespace {

class AdapterMaterializer {
 public:
  AdapterMaterializer(const Registry& registry, const CandidateWorkflow& c, std::vector<PlanStep>& steps)
      : registry_(registry), candidate_(c), steps_(steps) {
    for (const auto& s : steps_) taken_.insert(s.id);
  }

  // Replaces `src` by the adapter chain reaching `target` (explicit adapters
  // first, then the cheapest remaining path).
  Source bridge(const Source& src, const DataKindSpec* target) {
    if (src.kind == Source::Kind::kParam) return src;
    auto spec = spec_of(src.without_adapters());
    std::vector<std::string> chain = src.adapters;
    for (const auto& a : chain) spec = registry_.find_translation(a)->to;
    if (target && spec != *target) {
      auto r = check_compatibility(spec, *target, registry_);
      if (auto* via = std::get_if<ViaAdapters>(&r))
        for (const auto& t : via->path) chain.push_back(t.adapter_id);
    }
    Source current = src.without_adapters();
    std::vector<std::string> prefix;
    for (const auto& a : chain) {
      prefix.push_back(a);
      auto key = std::make_pair(src.without_adapters(), prefix);
      auto it = made_.find(key);
      if (it == made_.end()) {
        const auto* t = registry_.find_translation(a);
        PlanStep step;
        step.id = fresh(a);
        step.capability_id = a;
        step.is_adapter = true;
        step.framework = "adapter";
        step.input_bindings["in"] = current;
        step.outputs.push_back(PortSpec{"out", t->to, false});
        step.translation = *t;
        steps_.push_back(step);
        it = made_.emplace(key, step.id).first;
      }
      current = Source::step(it->second, "out");
    }
    return current;
  }

 private:
  DataKindSpec spec_of(const Source& s) const {
    if (s.kind == Source::Kind::kRunInput) return candidate_.run_inputs.at(s.ref);
    for (const auto& step : steps_)
      if (step.id == s.ref)
        for (const auto& o : step.outputs)
          if (o.name == s.port) return o.data;
    throw Error(ErrorCode::kCompileError, "unresolvable source " + s.ref + "." + s.port);
  }

  std::string fresh(const std::string& base) {
    std::string id = base;
    for (int n = 2; taken_.count(id); ++n) id = base + "_" + std::to_string(n);
    taken_.insert(id);
    return id;
  }

  const Registry& registry_;
  const CandidateWorkflow& candidate_;
  std::vector<PlanStep>& steps_;
  std::set<std::string> taken_;
  std::map<std::pair<Source, std::vector<std::string>>, std::string> made_;
};

std::vector<PlanStep> topological(std::vector<PlanStep> steps) {
  std::map<std::string, std::set<std::string>> deps;
  for (const auto& s : steps) {
    auto& d = deps[s.id];
    for (const auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kStepOutput) d.insert(src.ref);
  }
  std::map<std::string, PlanStep> by_id;
  for (auto& s : steps) by_id.emplace(s.id, std::move(s));
  std::vector<PlanStep> out;
  std::set<std::string> placed;
  while (out.size() < by_id.size()) {
    const PlanStep* pick = nullptr;
    for (const auto& [id, s] : by_id) {  // map order: lexicographic tie-break
      if (placed.count(id)) continue;
      const auto& d = deps[id];
      if (std::all_of(d.begin(), d.end(), [&](const std::string& x) { return placed.count(x) > 0; })) {
        pick = &s;
        break;
      }
    }
    if (!pick) throw Error(ErrorCode::kCompileError, "plan has a data-flow cycle");
    placed.insert(pick->id);
    out.push_back(*pick);
  }
  return out;
}

// Ancestor sets over step-output bindings.
std::map<std::string, std::set<std::string>> ancestors(const std::vector<PlanStep>& ordered) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& s : ordered) {
    auto& a = out[s.id];
    for (const auto& [_, src] : s.input_bindings) {
      if (src.kind != Source::Kind::kStepOutput) continue;
      a.insert(src.ref);
      a.insert(out[src.ref].begin(), out[src.ref].end());
    }
  }
  return out;
}

}  // namespace

ExecutablePlan compile(const WorkflowDesign& design, const Registry& registry) {
  auto report = validate_design(design, registry);
  if (!report.valid()) throw Error(ErrorCode::kCompileError, "design failed validation", report.messages());
  const auto& c = design.chosen;

  std::vector<PlanStep> steps;
  for (const auto& ws : c.steps) {
    const auto* entry = registry.find(ws.capability_id);
    PlanStep s;
    s.id = ws.id;
    s.capability_id = ws.capability_id;
    s.framework = entry->framework;
    s.params = ws.params;
    s.outputs = entry->outputs;
    s.reliability = entry->reliability;
    s.input_bindings = ws.input_bindings;
    steps.push_back(std::move(s));
  }
  AdapterMaterializer adapters(registry, c, steps);
  const std::size_t n = steps.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto* entry = registry.find(steps[i].capability_id);
    auto bindings = steps[i].input_bindings;  // bridging may grow `steps`
    for (auto& [port, src] : bindings) src = adapters.bridge(src, &entry->find_input(port)->data);
    steps[i].input_bindings = std::move(bindings);
  }

  ExecutablePlan plan;
  plan.run_inputs = c.run_inputs;
  std::vector<ManifestEntry> named;
  for (const auto& o : c.outputs) named.push_back({o.sub_problem, adapters.bridge(o.source, &o.data), o.data});
  plan.steps = topological(std::move(steps));

  std::set<PortRef> consumed;
  for (const auto& s : plan.steps)
    for (const auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kStepOutput) consumed.insert({src.ref, src.port});

  // Manifest: sub-problem outputs, then unnamed terminal outputs.
  std::set<PortRef> in_manifest;
  for (const auto& m : named) {
    plan.outputs_manifest.push_back(m);
    if (m.source.kind == Source::Kind::kStepOutput) in_manifest.insert({m.source.ref, m.source.port});
  }
  for (const auto& s : plan.steps) {
    if (s.is_adapter) continue;
    for (const auto& o : s.outputs) {
      PortRef ref{s.id, o.name};
      if (!consumed.count(ref) && !in_manifest.count(ref))
        plan.outputs_manifest.push_back({"", Source::step(s.id, o.name), o.data});
    }
  }

  for (const auto& s : plan.steps) {
    for (const auto& o : s.outputs) {
      QualityCheck q;
      q.id = "schema:" + s.id + "." + o.name;
      q.target = {s.id, o.name};
      q.kind = QualityCheckKind::kSchema;
      plan.checks.push_back(q);
    }
  }
  for (const auto& s : plan.steps) {
    for (const auto& o : s.outputs) {
      if (consumed.count({s.id, o.name})) continue;
      QualityCheck q;
      q.id = "nonempty:" + s.id + "." + o.name;
      q.target = {s.id, o.name};
      q.kind = QualityCheckKind::kNonempty;
      plan.checks.push_back(q);
    }
  }
  // Independent producers of the same kind about the same subject. Two
  // instances of one capability with different parameters address different
  // subjects (e.g. per-hazard impacts) and are not compared.
  auto anc = ancestors(plan.steps);
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& a = plan.steps[i];
    if (a.is_adapter) continue;
    for (std::size_t j = i + 1; j < plan.steps.size(); ++j) {
      const auto& b = plan.steps[j];
      if (b.is_adapter || anc[a.id].count(b.id) || anc[b.id].count(a.id)) continue;
      if (a.capability_id == b.capability_id && a.params != b.params) continue;
      for (const auto& oa : a.outputs) {
        for (const auto& ob : b.outputs) {
          if (oa.data != ob.data) continue;
          QualityCheck q;
          q.id = "consistency:" + a.id + "." + oa.name + "~" + b.id + "." + ob.name;
          q.target = {a.id, oa.name};
          q.other = {b.id, ob.name};
          q.kind = QualityCheckKind::kConsistency;
          q.severity = Severity::kWarn;
          if (oa.data.kind == "anomaly_report") {
            q.tolerance = kOnsetToleranceSeconds;
            q.tolerance_mode = ToleranceMode::kAbsoluteSeconds;
          } else {
            q.tolerance = parse_rational(kDefaultConsistencyTolerance);
          }
          plan.checks.push_back(q);
        }
      }
    }
  }
  for (const auto& s : plan.steps)
    if (!s.is_adapter) plan.confidence *= s.reliability;
  plan.plan_id = plan.compute_id();
  return plan;
}

// ---------------------------------------------------------------------------
// Exports

ExportFormat parse_export_format(std::string_view name) {
  if (name == "json") return ExportFormat::kJson;
  if (name == "dot") return ExportFormat::kDot;
  if (name == "markdown" || name == "md") return ExportFormat::kMarkdown;
  throw Error(ErrorCode::kConfigError, "unknown export format '" + std::string(name) + "' (json|dot|markdown)");
}

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

std::string describe(const Source& s) {
  switch (s.kind) {
    case Source::Kind::kStepOutput: return "`" + s.ref + "." + s.port + "`";
    case Source::Kind::kRunInput: return "run input `" + s.ref + "`";
    case Source::Kind::kParam: return "literal `" + s.ref + "`";
  }
  return "";
}

std::string dot(const ExecutablePlan& plan) {
  std::ostringstream out;
  out << "digraph \"plan\" {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& s : plan.steps) {
    out << "  " << quote(s.id) << " [label=" << quote(s.id + '\n' + s.capability_id);
    if (s.is_adapter) out << ", style=dashed";
    out << "];\n";
  }
  for (const auto& s : plan.steps) {
    for (const auto& [port, src] : s.input_bindings) {
      if (src.kind != Source::Kind::kStepOutput) continue;
      const auto* from = plan.find(src.ref);
      out << "  " << quote(src.ref) << " -> " << quote(s.id) << " [label=" << quote(port);
      if (s.is_adapter || (from && from->is_adapter)) out << ", style=dashed";
      out << "];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string markdown(const ExecutablePlan& plan) {
  std::ostringstream out;
  out << "# Measurement plan `" << plan.plan_id.substr(0, 12) << "`\n\n";
  out << "Plan confidence: " << to_string(plan.confidence) << " (product of step reliabilities; a heuristic, not a "
      << "calibrated probability).\n\n";
  out << "## Steps\n\n| # | step | capability | inputs | params |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    std::vector<std::string> inputs, params;
    for (const auto& [port, src] : s.input_bindings) inputs.push_back(port + " <- " + describe(src));
    for (const auto& [k, v] : s.params) params.push_back(k + "=" + v);
    out << "| " << i + 1 << " | " << s.id << (s.is_adapter ? " (adapter)" : "") << " | " << s.capability_id << " | "
        << join(inputs, "; ") << " | " << join(params, ", ") << " |\n";
  }
  out << "\n## Quality checks\n\n";
  if (plan.checks.empty()) out << "None.\n";
  for (const auto& c : plan.checks)
    out << "- `" << c.id << "` (" << to_string(c.kind) << ", " << to_string(c.severity) << ")\n";
  out << "\n## Outputs\n\n";
  if (plan.outputs_manifest.empty()) out << "None.\n";
  for (const auto& m : plan.outputs_manifest)
    out << "- " << (m.sub_problem.empty() ? "(terminal)" : m.sub_problem) << ": " << m.data.label() << " from "
        << describe(m.source) << "\n";
  out << "\n## Results\n\n_Filled in after execution._\n";
  return out.str();
}

}  // namespace

std::string export_plan(const ExecutablePlan& plan, ExportFormat format) {
  switch (format) {
    case ExportFormat::kJson: return to_json(plan).dump(2) + "\n";
    case ExportFormat::kDot: return dot(plan);
    case ExportFormat::kMarkdown: return markdown(plan);
  }
  return "";
}

}  // namespace arachnet
