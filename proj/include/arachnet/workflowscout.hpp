#pragma once

// Stage 2: capability composition search.

#include "arachnet/querymind.hpp"
#include "arachnet/registry.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace arachnet {

struct BackendHints;

struct Source {
  enum class Kind { kStepOutput, kRunInput, kParam };
  Kind kind = Kind::kRunInput;
  std::string ref;   // step id, run-input name, or literal JSON text
  std::string port;  // step output port (kStepOutput only)
  // Translation adapters applied to the value, in order. Compilation turns
  // each into an explicit adapter step.
  std::vector<std::string> adapters;

  auto operator<=>(const Source&) const = default;

  static Source step(std::string id, std::string port) { return {Kind::kStepOutput, std::move(id), std::move(port), {}}; }
  static Source run_input(std::string name) { return {Kind::kRunInput, std::move(name), "", {}}; }
  Source without_adapters() const { return {kind, ref, port, {}}; }
};

Json to_json(const Source& source);
Source source_from_json(const Json& doc, const std::string& where);

struct WorkflowStep {
  std::string id;
  std::string capability_id;
  std::map<std::string, Source> input_bindings;
  std::map<std::string, std::string> params;
};

struct TradeoffScore {
  int data_requirements = 0;
  Rational compute_cost = 0;
  Rational reliability = 1;
};

struct WorkflowOutput {
  std::string sub_problem;
  DataKindSpec data;
  Source source;
};

struct CandidateWorkflow {
  std::vector<WorkflowStep> steps;
  TradeoffScore score;
  std::vector<WorkflowOutput> outputs;
  std::map<std::string, DataKindSpec> run_inputs;

  const WorkflowStep* find(std::string_view id) const;
  // Sorted capability ids (with repeats); the distinctness key.
  std::vector<std::string> capability_multiset() const;
};

enum class ExplorationMode { kDirect, kComparative };
std::string_view to_string(ExplorationMode mode);

struct WorkflowDesign {
  CandidateWorkflow chosen;
  std::vector<CandidateWorkflow> alternatives;
  std::string rationale;
  ExplorationMode exploration_mode = ExplorationMode::kDirect;
};

Json to_json(const CandidateWorkflow& candidate);
CandidateWorkflow candidate_from_json(const Json& doc, const std::string& where);
Json to_json(const WorkflowDesign& design);
// Errors: SchemaViolation naming the field.
WorkflowDesign workflow_design_from_json(const Json& doc);

struct ExplorationBudget {
  int k = 3;
  // A graph is "simple" when it has at most this many sub-problems or forms a
  // linear chain; simple graphs satisfiable by one framework go direct.
  int direct_max_sub_problems = 2;
  bool linear_chains_direct = true;
  std::size_t max_expansions = 200000;
};

// Compute cost charges every distinct (source, adapter chain) conversion in
// full, the same model the planner minimizes.
TradeoffScore score_candidate(const CandidateWorkflow& candidate, const Registry& registry);

// Uniform-cost backward search. Each available kind becomes a run input named
// by its kind token. Errors: NoPlan listing blocking kinds.
CandidateWorkflow plan_for_kind(const DataKindSpec& goal, const Registry& registry,
                                const std::set<DataKindSpec>& available,
                                std::size_t max_expansions = ExplorationBudget{}.max_expansions);

// Search primitives shared with the curator and tests.
namespace planning {

// A plan fragment whose bindings reference local steps ("#<index>") or
// caller-supplied sources.
struct Fragment {
  struct Step {
    const CapabilityEntry* capability = nullptr;
    std::map<std::string, Source> bindings;
  };
  std::vector<Step> steps;          // topologically ordered
  std::vector<Source> goal_sources;  // one per requested goal
  Rational cost = 0;

  std::vector<std::string> sorted_ids() const;
};

using CapabilityFilter = std::function<bool(const CapabilityEntry&)>;

// Up to `k` cheapest fragments with distinct capability sets producing all
// `goals`, ordered by (cost, step count, sorted capability ids).
std::vector<Fragment> k_best(const std::vector<DataKindSpec>& goals, const Registry& registry,
                             const std::vector<std::pair<DataKindSpec, Source>>& available, std::size_t k,
                             const CapabilityFilter& filter = nullptr,
                             std::size_t max_expansions = ExplorationBudget{}.max_expansions);

// Kinds that make `goals` unreachable (for NoPlan diagnostics).
std::vector<std::string> blocking_kinds(const std::vector<DataKindSpec>& goals, const Registry& registry,
                                        const std::set<DataKindSpec>& available, const CapabilityFilter& filter);

}  // namespace planning

// Errors: NoPlan with the failing sub-problem id.
WorkflowDesign explore(const SubProblemGraph& graph, const Registry& registry, const ExplorationBudget& budget = {},
                       const BackendHints* hints = nullptr);

struct Violation {
  std::string kind;  // cycle | unbound-port | incompatible-kinds | unknown-capability | ...
  std::string message;
  std::vector<std::string> steps;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool valid() const { return violations.empty(); }
  std::vector<std::string> messages() const;
};

Json to_json(const ValidationReport& report);

ValidationReport validate_candidate(const CandidateWorkflow& candidate, const Registry& registry);
ValidationReport validate_design(const WorkflowDesign& design, const Registry& registry);

// DOT digraph: steps as nodes, data flow as edges (adapter bindings dashed).
std::string candidate_to_dot(const CandidateWorkflow& candidate, const std::string& name = "workflow");
std::string sub_problem_graph_to_dot(const SubProblemGraph& graph);

}  // namespace arachnet
