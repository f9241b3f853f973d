#pragma once

// Four-stage pipeline state machine with expert-mode review gates and a
// persistent run store.

#include "arachnet/backend.hpp"
#include "arachnet/curator.hpp"
#include "arachnet/executor.hpp"
#include "arachnet/toolsim.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace arachnet {

constexpr int kStageCount = 4;
// querymind, workflowscout, solutionweaver (compile + execute), curator
std::string_view stage_name(int stage);  // 1-based
// Accepts a name or "1".."4". Errors: NotFound.
int parse_stage(std::string_view text);

enum class StageStatus { kPending, kRunning, kAwaitingReview, kApproved, kCompleted, kFailed, kRejected };
std::string_view to_string(StageStatus status);
StageStatus parse_stage_status(std::string_view text);

enum class RunMode { kStandard, kExpert };
std::string_view to_string(RunMode mode);
// Errors: ConfigError.
RunMode parse_run_mode(std::string_view text);

struct StageState {
  StageStatus status = StageStatus::kPending;
  std::string artifact;  // file name inside the run directory, empty until produced
  bool edited = false;
  std::string reviewer;
  std::string error;
};

struct RunRecord {
  std::string run_id;
  std::string query;
  RunMode mode = RunMode::kStandard;
  std::array<StageState, kStageCount> stages;
  int registry_version = 0;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  StageState& stage(int s) { return stages.at(s - 1); }
  const StageState& stage(int s) const { return stages.at(s - 1); }
  bool terminal() const;
  bool completed() const { return stages.back().status == StageStatus::kCompleted; }
  // "pending" | "running" | "awaiting_review" | "completed" | "failed" | "rejected"
  std::string state() const;
};

Json to_json(const RunRecord& record);
RunRecord run_record_from_json(const Json& doc);

// Stage-gating invariant; returns the violations found (empty when sound).
std::vector<std::string> gating_violations(const RunRecord& record);

enum class DecisionKind { kApprove, kEdit, kReject };

struct ReviewDecision {
  int stage = 1;
  DecisionKind kind = DecisionKind::kApprove;
  Json replacement;  // edit
  std::string reason;
  std::string reviewer;
};

// Errors: SchemaViolation.
ReviewDecision review_decision_from_json(const Json& doc, int stage);

// Sortable 26-character ids: 48-bit millisecond time, 80 random bits,
// Crockford base32. Monotonic within one generator.
class UlidGenerator {
 public:
  explicit UlidGenerator(Clock& clock, std::uint64_t seed = std::random_device{}());
  std::string next();

 private:
  Clock& clock_;
  std::mt19937_64 rng_;
  std::mutex mutex_;
  std::int64_t last_ms_ = -1;
  std::array<std::uint8_t, 10> last_random_{};
};

class RunStore {
 public:
  virtual ~RunStore() = default;
  virtual void save_record(const RunRecord& record) = 0;
  // Errors: NotFound.
  virtual RunRecord load_record(const std::string& run_id) const = 0;
  virtual bool exists(const std::string& run_id) const = 0;
  virtual std::vector<std::string> list() const = 0;  // sorted ascending
  virtual void put_document(const std::string& run_id, const std::string& name, const Json& doc) = 0;
  virtual std::optional<Json> get_document(const std::string& run_id, const std::string& name) const = 0;
  virtual BlobStore& blobs(const std::string& run_id) = 0;
};

// ARACHNET_HOME/runs/<id>/{run.json, stage<N>.json, stage<N>.json.orig,
// result.json, blobs/}. Every write is atomic.
class FsRunStore final : public RunStore {
 public:
  explicit FsRunStore(std::filesystem::path runs_dir);
  void save_record(const RunRecord& record) override;
  RunRecord load_record(const std::string& run_id) const override;
  bool exists(const std::string& run_id) const override;
  std::vector<std::string> list() const override;
  void put_document(const std::string& run_id, const std::string& name, const Json& doc) override;
  std::optional<Json> get_document(const std::string& run_id, const std::string& name) const override;
  BlobStore& blobs(const std::string& run_id) override;
  std::filesystem::path run_dir(const std::string& run_id) const { return dir_ / run_id; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<FsBlobStore>> blobs_;
};

class MemoryRunStore final : public RunStore {
 public:
  void save_record(const RunRecord& record) override;
  RunRecord load_record(const std::string& run_id) const override;
  bool exists(const std::string& run_id) const override;
  std::vector<std::string> list() const override;
  void put_document(const std::string& run_id, const std::string& name, const Json& doc) override;
  std::optional<Json> get_document(const std::string& run_id, const std::string& name) const override;
  BlobStore& blobs(const std::string& run_id) override;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Json> records_;
  std::map<std::string, std::map<std::string, Json>> documents_;
  std::map<std::string, std::unique_ptr<MemoryBlobStore>> blobs_;
};

std::string artifact_name(int stage);  // "stage<N>.json"
constexpr const char* kResultDocument = "result.json";

// What each stage computes. The orchestrator owns all state transitions.
class StageRunner {
 public:
  virtual ~StageRunner() = default;
  // Produces the stage artifact from the earlier artifacts (index 0 = stage 1).
  virtual Json run(int stage, const RunRecord& record, const std::vector<Json>& prior, RunStore& store) = 0;
  // Validator messages for a replacement artifact; empty when acceptable.
  virtual std::vector<std::string> validate_edit(int stage, const Json& replacement, const RunRecord& record,
                                                 const std::vector<Json>& prior) = 0;
  // Work that must follow a stage's final acceptance (e.g. re-running an
  // edited plan, promoting composites). Returns the artifact to keep.
  virtual Json finalize(int /*stage*/, const Json& artifact, const RunRecord&, const std::vector<Json>& /*prior*/,
                        RunStore&) {
    return artifact;
  }
  // Whether a finished stage counts as a failure (e.g. execution failed).
  virtual std::optional<std::string> failure(int /*stage*/, const Json& /*artifact*/, const RunRecord&, RunStore&) {
    return std::nullopt;
  }
};

struct PipelineConfig {
  BackendConfig backend;
  ExplorationBudget budget;
  std::filesystem::path dataset_dir;  // fixture dataset; empty: bundled minitopo
  bool parallel_execution = false;
  int min_support = kDefaultMinSupport;

  Json to_json() const;
};

// Errors: ConfigError.
PipelineConfig pipeline_config_from_json(const Json& doc);

// The real stages over a versioned registry, tool simulators and a planner
// backend.
class ArachnetStages final : public StageRunner {
 public:
  ArachnetStages(RegistryStore& registry, std::shared_ptr<PlannerBackend> backend, PipelineConfig config,
                 Clock* clock = nullptr);

  Json run(int stage, const RunRecord& record, const std::vector<Json>& prior, RunStore& store) override;
  std::vector<std::string> validate_edit(int stage, const Json& replacement, const RunRecord& record,
                                         const std::vector<Json>& prior) override;
  Json finalize(int stage, const Json& artifact, const RunRecord& record, const std::vector<Json>& prior,
                RunStore& store) override;
  std::optional<std::string> failure(int stage, const Json& artifact, const RunRecord& record, RunStore& store) override;

  AdapterSet adapters(const RegistryPtr& registry) const;
  // Curation outside a run: mine every successful run in the store, and
  // promote the selected ids of such a proposal document.
  Json propose(RunStore& store) { return curate(RunRecord{}, store); }
  Json promote_selected(const Json& proposal, RunStore& store) { return finalize(4, proposal, RunRecord{}, {}, store); }
  // Injected before each executed step; tests use it to simulate crashes.
  std::function<void(const PlanStep&)> before_step;

 private:
  Json execute_plan(const ExecutablePlan& plan, const RunRecord& record, const std::vector<Json>& prior,
                    RunStore& store);
  Json curate(const RunRecord& record, RunStore& store);

  RegistryStore& registry_;
  std::shared_ptr<PlannerBackend> backend_;
  PipelineConfig config_;
  Clock* clock_;
  std::shared_ptr<const toolsim::FixtureDataset> dataset_;
};

class Orchestrator {
 public:
  Orchestrator(RunStore& store, StageRunner& stages, Clock& clock, std::function<int()> registry_version = {},
               std::uint64_t id_seed = std::random_device{}());

  // Persists the record, then advances (standard mode runs to the end, expert
  // mode stops at the first review gate).
  std::string start_run(const std::string& query, RunMode mode);
  // Idempotent; re-runs a stage left in "running" by a crash.
  RunRecord advance(const std::string& run_id);
  // Errors: NotFound, WrongState, InvalidEdit (record unchanged).
  RunRecord submit_review(const std::string& run_id, const ReviewDecision& decision);
  RunRecord get(const std::string& run_id) const { return store_.load_record(run_id); }

  RunStore& store() { return store_; }

 private:
  std::mutex& run_mutex(const std::string& run_id);
  std::vector<Json> prior_artifacts(const RunRecord& record, int stage) const;
  void drive(RunRecord& record);
  void complete_stage(RunRecord& record, int stage, const Json& artifact);
  void touch(RunRecord& record);

  RunStore& store_;
  StageRunner& stages_;
  Clock& clock_;
  std::function<int()> registry_version_;
  UlidGenerator ids_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// Stage artifacts as DOT, for stages 1-3. Errors: NotFound.
std::string artifact_dot(int stage, const Json& artifact);

}  // namespace arachnet
