#pragma once

// Stage 1: query -> QueryIntent -> SubProblemGraph.

#include "arachnet/data.hpp"
#include "arachnet/registry.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace arachnet {

class PlannerBackend;

enum class SubjectType { kCable, kHazardEvent, kRegionPair, kNone };
enum class Aggregation { kCountry, kAsn, kCable, kNone };

std::string_view to_string(SubjectType type);
std::string_view to_string(Aggregation aggregation);

struct Subject {
  SubjectType entity_type = SubjectType::kNone;
  std::vector<std::string> identifiers;

  bool operator==(const Subject&) const = default;
};

struct Classification {
  bool spatial = false;
  bool temporal = false;
  bool causal = false;
  bool data_dependency = false;

  bool operator==(const Classification&) const = default;
};

struct QueryIntent {
  std::string goal_kind;
  Subject subject;
  Aggregation aggregation = Aggregation::kNone;
  std::optional<TimeWindow> time_window;
  std::map<std::string, std::string> parameters;
  Classification classification;

  bool operator==(const QueryIntent&) const = default;
};

Json to_json(const QueryIntent& intent);
// Strict parse. Throws SchemaViolation whose details list every problem found.
QueryIntent intent_from_json(const Json& doc);
// Every schema problem in `doc` (empty when valid).
std::vector<std::string> validate_intent_json(const Json& doc);

struct SubProblem {
  std::string id;
  std::string statement;
  DataKindSpec required_output;
  std::vector<std::string> depends_on;
  std::vector<Constraint> constraints;
  // Parameters applied to the steps that solve this sub-problem (only keys the
  // capability declares), e.g. hazard_type for per-hazard sub-problems.
  std::map<std::string, std::string> parameters;
};

enum class CheckKind { kOutputPresent, kOutputNonempty, kThreshold };

struct SuccessCriterion {
  std::string description;
  CheckKind check = CheckKind::kOutputNonempty;
  std::string sub_problem;  // whose output is checked
  // threshold only: every `column` value of the output satisfies `op value`.
  std::string column;
  std::string op;  // <=, <, >=, >, ==
  Rational value;
};

struct Feasibility {
  bool feasible = true;
  std::vector<std::string> missing_kinds;
};

struct SubProblemGraph {
  QueryIntent intent;
  std::vector<SubProblem> sub_problems;
  std::vector<SuccessCriterion> success_criteria;
  std::vector<std::string> risks;
  Feasibility feasibility;
  std::string rules_version;

  const SubProblem* find(std::string_view id) const;
  // Sub-problem ids in dependency order, ties by position in the list.
  std::vector<std::string> topological_order() const;
  // Sub-problems nothing depends on.
  std::vector<std::string> terminals() const;
};

Json to_json(const SubProblemGraph& graph);
SubProblemGraph sub_problem_graph_from_json(const Json& doc);
// Structural validation (unique ids, resolvable and acyclic dependencies,
// declared kinds, criteria targets). Returns the problems found.
std::vector<std::string> validate_graph(const SubProblemGraph& graph, const Registry& registry);

constexpr const char* kExpansionRulesVersion = "expansion-rules/3";

// Named run inputs an intent supplies, e.g. "cables" -> cable_id_set.
std::map<std::string, DataKindSpec> run_inputs_for(const QueryIntent& intent, const Registry& registry);

// Deterministic rule table: intent -> graph (feasibility left at default).
// Errors: UnknownGoalKind.
SubProblemGraph expand(const QueryIntent& intent, const Registry& registry);

// Errors: IntentError, TransportError (from the backend), UnknownGoalKind.
SubProblemGraph analyze(const std::string& query, const Registry& registry, PlannerBackend& backend);

// Marks kinds unreachable from run inputs and source capabilities under hard
// constraints (data_availability unavailable, temporal_coverage not covering
// the intent window).
SubProblemGraph assess_feasibility(SubProblemGraph graph, const Registry& registry);

// Whether a capability passes the hard constraints for an intent.
bool satisfies_hard_constraints(const CapabilityEntry& entry, const QueryIntent& intent,
                                std::string* reason = nullptr);

}  // namespace arachnet
