#include "arachnet/querymind.hpp"

#include "arachnet/backend.hpp"
#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace arachnet {

namespace jr = jsonread;

std::string_view to_string(SubjectType type) {
  switch (type) {
    case SubjectType::kCable: return "cable";
    case SubjectType::kHazardEvent: return "hazard_event";
    case SubjectType::kRegionPair: return "region_pair";
    case SubjectType::kNone: return "none";
  }
  return "none";
}

std::string_view to_string(Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::kCountry: return "country";
    case Aggregation::kAsn: return "asn";
    case Aggregation::kCable: return "cable";
    case Aggregation::kNone: return "none";
  }
  return "none";
}

namespace {

std::string_view to_string(CheckKind kind) {
  switch (kind) {
    case CheckKind::kOutputPresent: return "output_present";
    case CheckKind::kOutputNonempty: return "output_nonempty";
    case CheckKind::kThreshold: return "threshold";
  }
  return "output_nonempty";
}

template <typename E>
std::optional<E> parse_enum(const std::string& text, std::initializer_list<E> values) {
  for (auto v : values)
    if (to_string(v) == text) return v;
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// QueryIntent documents

Json to_json(const QueryIntent& intent) {
  Json doc{{"goal_kind", intent.goal_kind},
           {"subject", {{"entity_type", to_string(intent.subject.entity_type)},
                        {"identifiers", intent.subject.identifiers}}},
           {"aggregation", to_string(intent.aggregation)},
           {"parameters", intent.parameters},
           {"classification", {{"spatial", intent.classification.spatial},
                               {"temporal", intent.classification.temporal},
                               {"causal", intent.classification.causal},
                               {"data_dependency", intent.classification.data_dependency}}}};
  if (intent.time_window) {
    doc["time_window"] = {{"start", format_iso8601(intent.time_window->start)},
                          {"end", format_iso8601(intent.time_window->end)}};
  } else {
    doc["time_window"] = nullptr;
  }
  return doc;
}

namespace {

QueryIntent parse_intent(const Json& doc, std::vector<std::string>& errors) {
  QueryIntent intent;
  auto err = [&](const std::string& where, const std::string& what) { errors.push_back(where + ": " + what); };
  if (!doc.is_object()) {
    err("intent", "expected an object");
    return intent;
  }
  static const std::set<std::string> allowed{"goal_kind", "subject", "aggregation", "time_window", "parameters",
                                             "classification"};
  for (const auto& [k, _] : doc.items())
    if (!allowed.count(k)) err("intent." + k, "unknown field");

  if (!doc.contains("goal_kind") || !doc["goal_kind"].is_string()) {
    err("intent.goal_kind", "required string");
  } else {
    intent.goal_kind = doc["goal_kind"].get<std::string>();
    if (!is_token(intent.goal_kind)) err("intent.goal_kind", "must match [a-z0-9_]+");
  }

  if (!doc.contains("subject") || !doc["subject"].is_object()) {
    err("intent.subject", "required object");
  } else {
    const auto& s = doc["subject"];
    for (const auto& [k, _] : s.items())
      if (k != "entity_type" && k != "identifiers") err("intent.subject." + k, "unknown field");
    auto type = s.contains("entity_type") && s["entity_type"].is_string()
                    ? parse_enum<SubjectType>(s["entity_type"].get<std::string>(),
                                              {SubjectType::kCable, SubjectType::kHazardEvent,
                                               SubjectType::kRegionPair, SubjectType::kNone})
                    : std::nullopt;
    if (!type) err("intent.subject.entity_type", "must be one of cable|hazard_event|region_pair|none");
    else intent.subject.entity_type = *type;
    if (!s.contains("identifiers") || !s["identifiers"].is_array()) {
      err("intent.subject.identifiers", "required array of strings");
    } else {
      for (const auto& id : s["identifiers"]) {
        if (!id.is_string() || id.get<std::string>().empty()) err("intent.subject.identifiers", "entries must be non-empty strings");
        else intent.subject.identifiers.push_back(id.get<std::string>());
      }
    }
    if (type == SubjectType::kRegionPair && intent.subject.identifiers.size() != 2)
      err("intent.subject.identifiers", "region_pair needs exactly two regions");
  }

  auto agg = doc.contains("aggregation") && doc["aggregation"].is_string()
                 ? parse_enum<Aggregation>(doc["aggregation"].get<std::string>(),
                                           {Aggregation::kCountry, Aggregation::kAsn, Aggregation::kCable,
                                            Aggregation::kNone})
                 : std::nullopt;
  if (!agg) err("intent.aggregation", "must be one of country|asn|cable|none");
  else intent.aggregation = *agg;

  if (doc.contains("time_window") && !doc["time_window"].is_null()) {
    const auto& w = doc["time_window"];
    try {
      if (!w.is_object() || w.size() != 2) throw Error(ErrorCode::kSchemaViolation, "");
      TimeWindow tw{parse_iso8601(w.at("start").get<std::string>()), parse_iso8601(w.at("end").get<std::string>())};
      if (tw.end <= tw.start) err("intent.time_window", "end must be after start");
      intent.time_window = tw;
    } catch (const std::exception&) {
      err("intent.time_window", "expected {start, end} ISO-8601 UTC timestamps");
    }
  }

  if (doc.contains("parameters")) {
    const auto& p = doc["parameters"];
    if (!p.is_object()) {
      err("intent.parameters", "expected an object of strings");
    } else {
      for (const auto& [k, v] : p.items()) {
        if (!v.is_string()) {
          err("intent.parameters." + k, "expected a string");
          continue;
        }
        intent.parameters[k] = v.get<std::string>();
      }
    }
  }
  if (auto it = intent.parameters.find("failure_probability"); it != intent.parameters.end()) {
    try {
      auto p = parse_rational(it->second);
      if (p < 0 || p > 1) err("intent.parameters.failure_probability", "must be in [0,1]");
    } catch (const Error&) {
      err("intent.parameters.failure_probability", "must be a rational number");
    }
  }

  if (!doc.contains("classification") || !doc["classification"].is_object()) {
    err("intent.classification", "required object of flags");
  } else {
    const auto& c = doc["classification"];
    auto flag = [&](const char* key, bool& out) {
      if (!c.contains(key)) return;
      if (!c[key].is_boolean()) err(std::string("intent.classification.") + key, "expected a boolean");
      else out = c[key].get<bool>();
    };
    for (const auto& [k, _] : c.items()) {
      if (k != "spatial" && k != "temporal" && k != "causal" && k != "data_dependency")
        err("intent.classification." + k, "unknown flag");
    }
    flag("spatial", intent.classification.spatial);
    flag("temporal", intent.classification.temporal);
    flag("causal", intent.classification.causal);
    flag("data_dependency", intent.classification.data_dependency);
  }
  return intent;
}

}  // namespace

std::vector<std::string> validate_intent_json(const Json& doc) {
  std::vector<std::string> errors;
  parse_intent(doc, errors);
  return errors;
}

QueryIntent intent_from_json(const Json& doc) {
  std::vector<std::string> errors;
  auto intent = parse_intent(doc, errors);
  if (!errors.empty()) throw Error(ErrorCode::kSchemaViolation, "invalid query intent: " + errors.front(), errors);
  return intent;
}

// ---------------------------------------------------------------------------
// SubProblemGraph

const SubProblem* SubProblemGraph::find(std::string_view id) const {
  for (const auto& sp : sub_problems)
    if (sp.id == id) return &sp;
  return nullptr;
}

std::vector<std::string> SubProblemGraph::topological_order() const {
  std::vector<std::string> order;
  std::set<std::string> done;
  while (order.size() < sub_problems.size()) {
    bool progressed = false;
    for (const auto& sp : sub_problems) {
      if (done.count(sp.id)) continue;
      bool ready = std::all_of(sp.depends_on.begin(), sp.depends_on.end(),
                               [&](const std::string& d) { return done.count(d) > 0; });
      if (!ready) continue;
      order.push_back(sp.id);
      done.insert(sp.id);
      progressed = true;
      break;
    }
    if (!progressed) throw Error(ErrorCode::kSchemaViolation, "sub-problem dependencies contain a cycle");
  }
  return order;
}

std::vector<std::string> SubProblemGraph::terminals() const {
  std::set<std::string> used;
  for (const auto& sp : sub_problems) used.insert(sp.depends_on.begin(), sp.depends_on.end());
  std::vector<std::string> out;
  for (const auto& sp : sub_problems)
    if (!used.count(sp.id)) out.push_back(sp.id);
  return out;
}

Json to_json(const SubProblemGraph& graph) {
  Json sps = Json::array();
  for (const auto& sp : graph.sub_problems) {
    Json constraints = Json::array();
    for (const auto& c : sp.constraints) constraints.push_back(to_json(c));
    sps.push_back({{"id", sp.id},
                   {"statement", sp.statement},
                   {"required_output", to_json(sp.required_output)},
                   {"depends_on", sp.depends_on},
                   {"constraints", constraints},
                   {"parameters", sp.parameters}});
  }
  Json criteria = Json::array();
  for (const auto& c : graph.success_criteria) {
    Json doc{{"description", c.description}, {"check", to_string(c.check)}, {"sub_problem", c.sub_problem}};
    if (c.check == CheckKind::kThreshold)
      doc["threshold"] = {{"column", c.column}, {"op", c.op}, {"value", to_string(c.value)}};
    criteria.push_back(doc);
  }
  Json feasibility{{"status", graph.feasibility.feasible ? "feasible" : "infeasible"},
                   {"missing_kinds", graph.feasibility.missing_kinds}};
  return {{"rules_version", graph.rules_version},
          {"intent", to_json(graph.intent)},
          {"sub_problems", sps},
          {"success_criteria", criteria},
          {"risks", graph.risks},
          {"feasibility", feasibility}};
}

SubProblemGraph sub_problem_graph_from_json(const Json& doc) {
  const std::string root = "stage1";
  jr::check_keys(doc, {"rules_version", "intent", "sub_problems", "success_criteria", "risks", "feasibility"}, root);
  SubProblemGraph g;
  g.rules_version = jr::opt_string(doc, "rules_version", root);
  g.intent = intent_from_json(jr::field(doc, "intent", root));
  const auto& sps = jr::array_field(doc, "sub_problems", root);
  for (std::size_t i = 0; i < sps.size(); ++i) {
    auto where = root + ".sub_problems[" + std::to_string(i) + "]";
    const auto& s = sps[i];
    jr::check_keys(s, {"id", "statement", "required_output", "depends_on", "constraints", "parameters"}, where);
    SubProblem sp;
    sp.id = jr::string_field(s, "id", where);
    sp.statement = jr::opt_string(s, "statement", where);
    try {
      sp.required_output = data_kind_from_json(jr::field(s, "required_output", where));
    } catch (const Error& e) {
      jr::fail(where + ".required_output", e.what());
    }
    sp.depends_on = jr::string_list(s, "depends_on", where, false);
    if (s.contains("constraints")) {
      const auto& cs = jr::array_field(s, "constraints", where);
      for (std::size_t j = 0; j < cs.size(); ++j)
        sp.constraints.push_back(constraint_from_json(cs[j], where + ".constraints[" + std::to_string(j) + "]"));
    }
    sp.parameters = jr::string_map(s, "parameters", where);
    g.sub_problems.push_back(std::move(sp));
  }
  if (doc.contains("success_criteria")) {
    const auto& cs = jr::array_field(doc, "success_criteria", root);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      auto where = root + ".success_criteria[" + std::to_string(i) + "]";
      jr::check_keys(cs[i], {"description", "check", "sub_problem", "threshold"}, where);
      SuccessCriterion c;
      c.description = jr::opt_string(cs[i], "description", where);
      auto check = parse_enum<CheckKind>(jr::string_field(cs[i], "check", where),
                                         {CheckKind::kOutputPresent, CheckKind::kOutputNonempty, CheckKind::kThreshold});
      if (!check) jr::fail(where + ".check", "must be output_present|output_nonempty|threshold");
      c.check = *check;
      c.sub_problem = jr::string_field(cs[i], "sub_problem", where);
      if (c.check == CheckKind::kThreshold) {
        const auto& t = jr::field(cs[i], "threshold", where);
        jr::check_keys(t, {"column", "op", "value"}, where + ".threshold");
        c.column = jr::string_field(t, "column", where + ".threshold");
        c.op = jr::string_field(t, "op", where + ".threshold");
        c.value = jr::rational_field(t, "value", where + ".threshold");
      }
      g.success_criteria.push_back(std::move(c));
    }
  }
  g.risks = jr::string_list(doc, "risks", root, false);
  if (doc.contains("feasibility")) {
    const auto& f = doc["feasibility"];
    jr::check_keys(f, {"status", "missing_kinds"}, root + ".feasibility");
    auto status = jr::string_field(f, "status", root + ".feasibility");
    if (status != "feasible" && status != "infeasible") jr::fail(root + ".feasibility.status", "feasible|infeasible");
    g.feasibility.feasible = status == "feasible";
    g.feasibility.missing_kinds = jr::string_list(f, "missing_kinds", root + ".feasibility", false);
  }
  return g;
}

std::vector<std::string> validate_graph(const SubProblemGraph& graph, const Registry& registry) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (const auto& sp : graph.sub_problems) {
    if (!is_token(sp.id)) problems.push_back("sub-problem id '" + sp.id + "' is not a token");
    if (!ids.insert(sp.id).second) problems.push_back("duplicate sub-problem id '" + sp.id + "'");
    if (!registry.declares(sp.required_output))
      problems.push_back("sub-problem '" + sp.id + "' requires undeclared kind " + sp.required_output.label());
  }
  for (const auto& sp : graph.sub_problems)
    for (const auto& d : sp.depends_on)
      if (!ids.count(d)) problems.push_back("sub-problem '" + sp.id + "' depends on unknown '" + d + "'");
  if (problems.empty()) {
    try {
      graph.topological_order();
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
  }
  for (const auto& c : graph.success_criteria) {
    if (!ids.count(c.sub_problem)) problems.push_back("success criterion targets unknown sub-problem '" + c.sub_problem + "'");
    if (c.check == CheckKind::kThreshold) {
      static const std::set<std::string> ops{"<=", "<", ">=", ">", "=="};
      if (!ops.count(c.op)) problems.push_back("success criterion uses unknown operator '" + c.op + "'");
    }
  }
  if (!registry.has_kind(graph.intent.goal_kind))
    problems.push_back("intent goal kind '" + graph.intent.goal_kind + "' is not in the vocabulary");
  return problems;
}

// ---------------------------------------------------------------------------
// Expansion rules

std::map<std::string, DataKindSpec> run_inputs_for(const QueryIntent& intent, const Registry& registry) {
  std::map<std::string, DataKindSpec> out;
  auto add = [&](const char* name, const char* kind) {
    if (auto spec = registry.spec_for_kind(kind)) out[name] = *spec;
  };
  switch (intent.subject.entity_type) {
    case SubjectType::kCable: add("cables", "cable_id_set"); break;
    case SubjectType::kHazardEvent: add("hazards", "hazard_event_set"); break;
    case SubjectType::kRegionPair: add("regions", "region_pair"); break;
    case SubjectType::kNone: break;
  }
  if (intent.time_window) add("window", "time_window");
  return out;
}

namespace {

class GraphBuilder {
 public:
  GraphBuilder(const QueryIntent& intent, const Registry& registry) : intent_(intent), registry_(registry) {}

  bool declared(const char* kind) const { return registry_.spec_for_kind(kind).has_value(); }

  SubProblem& add(const std::string& id, const std::string& statement, const std::string& kind,
                  std::vector<std::string> depends_on = {}) {
    auto spec = registry_.spec_for_kind(kind);
    if (!spec) throw Error(ErrorCode::kUnknownGoalKind, "expansion needs kind '" + kind + "', which is not declared");
    SubProblem sp;
    sp.id = id;
    sp.statement = statement;
    sp.required_output = *spec;
    sp.depends_on = std::move(depends_on);
    graph_.sub_problems.push_back(std::move(sp));
    return graph_.sub_problems.back();
  }

  void temporal(SubProblem& sp) const {
    if (!intent_.time_window) return;
    sp.constraints.push_back({ConstraintKind::kTemporalCoverage,
                              {{"start", format_iso8601(intent_.time_window->start)},
                               {"end", format_iso8601(intent_.time_window->end)}}});
  }

  void spatial(SubProblem& sp) const {
    if (intent_.subject.entity_type != SubjectType::kRegionPair) return;
    sp.constraints.push_back({ConstraintKind::kGeographicScope, {{"regions", join(intent_.subject.identifiers, ",")}}});
  }

  void criterion(const std::string& sp, CheckKind check, const std::string& description) {
    SuccessCriterion c;
    c.description = description;
    c.check = check;
    c.sub_problem = sp;
    graph_.success_criteria.push_back(std::move(c));
  }

  void threshold(const std::string& sp, const std::string& column, const std::string& op, Rational value,
                 const std::string& description) {
    SuccessCriterion c;
    c.description = description;
    c.check = CheckKind::kThreshold;
    c.sub_problem = sp;
    c.column = column;
    c.op = op;
    c.value = std::move(value);
    graph_.success_criteria.push_back(std::move(c));
  }

  void risk(std::string text) { graph_.risks.push_back(std::move(text)); }

  SubProblemGraph finish() {
    graph_.intent = intent_;
    graph_.rules_version = kExpansionRulesVersion;
    for (const auto& t : graph_.terminals())
      criterion(t, CheckKind::kOutputNonempty, "The answer for '" + t + "' contains at least one row.");
    risk("Methodological limitations: results inherit the assumptions of the registered tools, which are described "
         "but not re-derived here.");
    return std::move(graph_);
  }

 private:
  const QueryIntent& intent_;
  const Registry& registry_;
  SubProblemGraph graph_;
};

void expand_cable_impact(GraphBuilder& b, const QueryIntent& intent) {
  b.add("cable_dependencies", "Resolve the IP links that depend on the subject cables.", "ip_link_set");
  if (intent.aggregation == Aggregation::kCable) {
    b.add("cable_impact", "Measure the affected fraction of each cable's links.", "impact_table",
          {"cable_dependencies"});
    b.threshold("cable_impact", "impact", "<=", 1, "Impact fractions do not exceed 1.");
    return;
  }
  b.add("affected_ips", "Extract the IP addresses carried by the affected links.", "ip_set", {"cable_dependencies"});
  b.add("geographic_mapping", "Map the affected IP addresses to countries.", "country_table", {"affected_ips"});
  b.add("country_impact", "Aggregate the affected fraction of each country's IP footprint.", "impact_table",
        {"geographic_mapping"});
  b.threshold("country_impact", "impact", "<=", 1, "Impact fractions do not exceed 1.");
}

void expand_hazard_impact(GraphBuilder& b, const QueryIntent& intent) {
  std::set<std::string> types(intent.subject.identifiers.begin(), intent.subject.identifiers.end());
  std::vector<std::string> ids;
  for (const auto& type : types) {
    if (!is_token(type)) throw Error(ErrorCode::kSchemaViolation, "hazard type '" + type + "' is not a token");
    auto& sp = b.add(type + "_impact", "Estimate the expected country impact of " + type + " events.", "impact_table");
    sp.parameters["hazard_type"] = type;
    ids.push_back(sp.id);
  }
  if (ids.empty()) {
    b.add("hazard_impact", "Estimate the expected country impact of all hazard events.", "impact_table");
    return;
  }
  // Binary combine chain: ((a + b) + c) ...
  std::string acc = ids[0];
  for (std::size_t i = 1; i < ids.size(); ++i) {
    std::string id = i + 1 == ids.size() ? "combined_impact" : "combined_impact_" + std::to_string(i);
    b.add(id, "Combine the per-hazard expected impacts per country.", "impact_table", {acc, ids[i]});
    acc = id;
  }
  b.risk("Expected impact assumes independent cable failures at the stated probability.");
}

void expand_cascade(GraphBuilder& b, const QueryIntent& intent) {
  const auto& c = intent.classification;
  auto& cables = b.add("regional_cables", "Find the cables landing in both regions.", "cable_id_set");
  b.spatial(cables);
  b.add("cable_links", "Resolve the IP links carried by those cables.", "ip_link_set", {"regional_cables"});
  auto& impact = b.add("cable_impact", "Measure the failed fraction of each cable's links.", "impact_table",
                       {"cable_links"});
  impact.parameters["aggregation"] = "cable";
  b.add("cascade", "Propagate the cable failures through the AS dependency graph.", "cascade_timeline",
        {"cable_impact"});
  std::vector<std::string> evidence{"cascade"};
  bool validated = c.temporal && c.causal && intent.time_window;
  if (validated) {
    auto& changes = b.add("routing_changes", "Acquire the BGP path changes inside the time window.", "route_change_set");
    b.temporal(changes);
    b.add("routing_validation", "Detect the routing anomaly in the path changes.", "anomaly_report",
          {"routing_changes"});
    auto& latency = b.add("latency_measurement", "Measure inter-region latency from traceroutes.", "latency_series");
    b.temporal(latency);
    b.spatial(latency);
    b.add("latency_validation", "Detect the latency anomaly independently of routing data.", "anomaly_report",
          {"latency_measurement"});
    b.add("cross_layer_timeline", "Join the cascade with the routing and latency evidence.", "cascade_timeline",
          {"cascade", "routing_validation", "latency_validation"});
    b.criterion("routing_validation", CheckKind::kOutputPresent, "Routing evidence is materialized.");
    b.criterion("latency_validation", CheckKind::kOutputPresent, "Latency evidence is materialized.");
    b.risk("Timing agreement between routing and latency evidence suggests, but does not prove, a common cause.");
  }
  b.risk("Cable-to-AS failure coupling goes through link endpoints; other couplings are not modeled.");
}

void expand_forensics(GraphBuilder& b, const QueryIntent& intent) {
  auto& latency = b.add("latency_measurement", "Measure inter-region latency from traceroutes.", "latency_series");
  b.temporal(latency);
  b.spatial(latency);
  b.add("latency_anomaly", "Detect a significant latency increase against the baseline.", "anomaly_report",
        {"latency_measurement"});
  auto& cables = b.add("regional_cables", "Find the cables landing in both regions.", "cable_id_set");
  b.spatial(cables);
  b.add("cable_links", "Resolve the IP links carried by those cables.", "ip_link_set", {"regional_cables"});
  auto& changes = b.add("routing_changes", "Acquire the BGP path changes inside the time window.", "route_change_set");
  b.temporal(changes);
  b.add("suspect_ranking", "Rank cables by path share and routing-timing correlation.", "ranked_cable_table",
        {"latency_anomaly", "cable_links", "routing_changes"});
  (void)intent;
  b.risk("Suspect scores rank likelihood of involvement; they are not a root-cause proof.");
}

void expand_generic(GraphBuilder& b, const QueryIntent& intent) {
  const auto& c = intent.classification;
  b.add("answer", "Materialize the requested " + intent.goal_kind + ".", intent.goal_kind);
  if (c.spatial && b.declared("country_table") && intent.goal_kind != "country_table")
    b.add("geographic_mapping", "Map the subject to countries.", "country_table");
  if (c.temporal && b.declared("latency_series") && intent.goal_kind != "latency_series") {
    auto& sp = b.add("temporal_acquisition", "Acquire measurements inside the time window.", "latency_series");
    b.temporal(sp);
  }
  if (c.causal && b.declared("anomaly_report") && intent.goal_kind != "anomaly_report")
    b.add("independent_validation", "Validate the finding with an independent data source.", "anomaly_report");
}

}  // namespace

SubProblemGraph expand(const QueryIntent& intent, const Registry& registry) {
  if (!registry.has_kind(intent.goal_kind))
    throw Error(ErrorCode::kUnknownGoalKind, "goal kind '" + intent.goal_kind + "' is not in the registry vocabulary");
  GraphBuilder b(intent, registry);
  const auto type = intent.subject.entity_type;
  const auto& goal = intent.goal_kind;
  bool ok = true;
  auto need = [&](std::initializer_list<const char*> kinds) {
    for (const char* k : kinds) ok = ok && b.declared(k);
    return ok;
  };
  if (goal == "impact_table" && type == SubjectType::kCable &&
      need({"ip_link_set", "ip_set", "country_table"})) {
    expand_cable_impact(b, intent);
  } else if (goal == "impact_table" && type == SubjectType::kHazardEvent) {
    expand_hazard_impact(b, intent);
  } else if (goal == "cascade_timeline" && type == SubjectType::kRegionPair &&
             need({"cable_id_set", "ip_link_set", "impact_table", "route_change_set", "anomaly_report",
                   "latency_series"})) {
    expand_cascade(b, intent);
  } else if (goal == "ranked_cable_table" && type == SubjectType::kRegionPair && intent.time_window &&
             need({"latency_series", "anomaly_report", "cable_id_set", "ip_link_set", "route_change_set"})) {
    expand_forensics(b, intent);
  } else {
    expand_generic(b, intent);
  }
  return b.finish();
}

SubProblemGraph analyze(const std::string& query, const Registry& registry, PlannerBackend& backend) {
  if (query.empty()) throw Error(ErrorCode::kIntentError, "query is empty");
  std::vector<std::string> vocabulary;
  for (const auto& spec : registry.vocabulary) vocabulary.push_back(spec.kind);
  auto intent = backend.propose_intent(query, summarize_registry(registry), vocabulary);
  return assess_feasibility(expand(intent, registry), registry);
}

bool satisfies_hard_constraints(const CapabilityEntry& entry, const QueryIntent& intent, std::string* reason) {
  for (const auto& c : entry.constraints) {
    if (c.kind == ConstraintKind::kDataAvailability) {
      auto it = c.params.find("status");
      if (it != c.params.end() && it->second == "unavailable") {
        if (reason) *reason = entry.id + ": dataset " + c.params.at("dataset") + " is unavailable";
        return false;
      }
    }
    if (c.kind == ConstraintKind::kTemporalCoverage && intent.time_window) {
      auto start = parse_iso8601(c.params.at("start"));
      auto end = parse_iso8601(c.params.at("end"));
      if (intent.time_window->start < start || intent.time_window->end > end) {
        if (reason) *reason = entry.id + ": coverage " + c.params.at("start") + ".." + c.params.at("end") +
                              " does not include the query window";
        return false;
      }
    }
  }
  return true;
}

SubProblemGraph assess_feasibility(SubProblemGraph graph, const Registry& registry) {
  std::set<DataKindSpec> reachable;
  for (const auto& [name, spec] : run_inputs_for(graph.intent, registry)) reachable.insert(spec);
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& t : registry.translations)
      if (reachable.count(t.from) && reachable.insert(t.to).second) grew = true;
    for (const auto& [id, entry] : registry.entries) {
      if (!satisfies_hard_constraints(entry, graph.intent)) continue;
      bool ready = std::all_of(entry.inputs.begin(), entry.inputs.end(),
                               [&](const PortSpec& p) { return !p.required || reachable.count(p.data); });
      if (!ready) continue;
      for (const auto& o : entry.outputs)
        if (reachable.insert(o.data).second) grew = true;
    }
  }
  std::set<std::string> missing;
  for (const auto& sp : graph.sub_problems)
    if (!reachable.count(sp.required_output)) missing.insert(sp.required_output.kind);
  graph.feasibility.feasible = missing.empty();
  graph.feasibility.missing_kinds.assign(missing.begin(), missing.end());
  return graph;
}

}  // namespace arachnet
