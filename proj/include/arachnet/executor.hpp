#pragma once

// Interprets an ExecutablePlan against tool adapters.

#include "arachnet/data.hpp"
#include "arachnet/querymind.hpp"
#include "arachnet/solutionweaver.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace arachnet {

constexpr const char* kLossyConfidenceFactor = "19/20";

// Content-addressed payload storage; blobs hold DataValue::content().
class BlobStore {
 public:
  virtual ~BlobStore() = default;
  virtual void put(const std::string& digest, const Json& content) = 0;
  virtual std::optional<Json> get(const std::string& digest) const = 0;
};

class MemoryBlobStore final : public BlobStore {
 public:
  void put(const std::string& digest, const Json& content) override;
  std::optional<Json> get(const std::string& digest) const override;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Json> blobs_;
};

// One file per blob: <dir>/<digest>.json, written atomically.
class FsBlobStore final : public BlobStore {
 public:
  explicit FsBlobStore(std::filesystem::path dir);
  void put(const std::string& digest, const Json& content) override;
  std::optional<Json> get(const std::string& digest) const override;

 private:
  std::filesystem::path dir_;
};

// Rebuilds a DataValue from a stored blob. Errors: NotFound.
DataValue load_value(const BlobStore& blobs, const std::string& digest);

struct StepOutputRecord {
  std::string digest;
  DataKindSpec data;
  std::string provenance;
  Rational confidence = 1;
};

enum class CheckStatus { kPass, kFail, kSkipped };
std::string_view to_string(CheckStatus status);

struct CheckOutcome {
  std::string check_id;
  CheckStatus status = CheckStatus::kSkipped;
  Severity severity = Severity::kError;
  std::string value;  // measured value or failure reason
};

struct TimelineEntry {
  std::string step_id;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct ExecutionResult {
  std::string plan_id;
  bool success = true;
  std::string failed_step;
  std::string reason;
  std::map<std::string, StepOutputRecord> step_outputs;  // "step.port"
  std::map<std::string, std::string> run_inputs;         // name -> digest
  std::vector<std::string> executed;                     // plan order
  std::vector<std::string> skipped;                      // plan order
  std::vector<CheckOutcome> quality;                     // plan check order
  std::vector<TimelineEntry> timeline;
  Rational plan_confidence_posterior = 0;

  // Digest over everything except the timeline.
  std::string digest() const;
};

Json to_json(const ExecutionResult& result, bool with_timeline = true);
ExecutionResult execution_result_from_json(const Json& doc);

struct ExecutorOptions {
  bool parallel = false;
  Clock* clock = nullptr;  // SystemClock when null
  // Called before each step runs (tests inject crashes here).
  std::function<void(const PlanStep&)> before_step;
};

// Errors: MissingAdapter, MissingRunInput (before any step runs). Step
// failures are reported in the result status.
ExecutionResult execute(const ExecutablePlan& plan, const AdapterSet& adapters,
                        const std::map<std::string, DataValue>& run_inputs, BlobStore& blobs,
                        const ExecutorOptions& options = {});

// Errors: AdapterMismatch.
DataValue translate(const DataValue& value, const Translation& translation, const AdapterSet& adapters);

CheckOutcome evaluate_check(const QualityCheck& check, const std::map<PortRef, DataValue>& outputs);

// Numeric view of a payload cell: JSON numbers or rational strings.
std::optional<Rational> numeric_value(const Json& cell);

struct CriterionOutcome {
  std::string description;
  bool passed = false;
  std::string detail;
};

// Success criteria of the sub-problem graph against the executed outputs.
std::vector<CriterionOutcome> evaluate_criteria(const SubProblemGraph& graph, const ExecutablePlan& plan,
                                                const ExecutionResult& result, const BlobStore& blobs);
Json to_json(const std::vector<CriterionOutcome>& outcomes);

}  // namespace arachnet
