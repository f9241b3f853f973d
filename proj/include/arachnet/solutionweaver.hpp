#pragma once

// Stage 3: WorkflowDesign -> ExecutablePlan with explicit adapter steps and
// quality checks; plan exports.

#include "arachnet/workflowscout.hpp"

#include <optional>
#include <string>
#include <vector>

namespace arachnet {

constexpr int kPlanSchemaVersion = 1;
constexpr const char* kDefaultConsistencyTolerance = "1/20";
// Onset timestamps of anomaly reports are compared within this many seconds.
constexpr std::int64_t kOnsetToleranceSeconds = 300;

struct PortRef {
  std::string step;
  std::string port;
  auto operator<=>(const PortRef&) const = default;
  std::string label() const { return step + "." + port; }
};

enum class QualityCheckKind { kSchema, kNonempty, kRange, kConsistency };
enum class Severity { kError, kWarn };
enum class ToleranceMode { kRelative, kAbsoluteSeconds };

std::string_view to_string(QualityCheckKind kind);
std::string_view to_string(Severity severity);

struct QualityCheck {
  std::string id;
  PortRef target;
  QualityCheckKind kind = QualityCheckKind::kSchema;
  Severity severity = Severity::kError;
  // range
  std::string column;  // empty: every numeric value
  Rational min = 0;
  Rational max = 1;
  // consistency
  PortRef other;
  Rational tolerance = 0;
  ToleranceMode tolerance_mode = ToleranceMode::kRelative;
};

struct PlanStep {
  std::string id;
  std::string capability_id;  // capability id, or adapter id for adapter steps
  bool is_adapter = false;
  std::string framework;
  std::map<std::string, Source> input_bindings;  // adapters already materialized
  std::map<std::string, std::string> params;
  std::vector<PortSpec> outputs;
  Rational reliability = 1;
  std::optional<Translation> translation;  // adapter steps
};

struct ManifestEntry {
  std::string sub_problem;  // empty for terminal outputs no sub-problem names
  Source source;            // step output or run input
  DataKindSpec data;
};

struct ExecutablePlan {
  int plan_schema_version = kPlanSchemaVersion;
  std::string plan_id;
  std::vector<PlanStep> steps;
  std::vector<QualityCheck> checks;
  std::vector<ManifestEntry> outputs_manifest;
  Rational confidence = 1;
  std::map<std::string, DataKindSpec> run_inputs;

  const PlanStep* find(std::string_view id) const;
  // Digest of every field except plan_id.
  std::string compute_id() const;
};

Json to_json(const ExecutablePlan& plan);
// Errors: SchemaViolation naming the field.
ExecutablePlan executable_plan_from_json(const Json& doc);

// Errors: CompileError carrying the validator messages.
ExecutablePlan compile(const WorkflowDesign& design, const Registry& registry);

enum class ExportFormat { kJson, kDot, kMarkdown };
// Errors: ConfigError for an unknown name.
ExportFormat parse_export_format(std::string_view name);
std::string export_plan(const ExecutablePlan& plan, ExportFormat format);

}  // namespace arachnet
