#include "arachnet/orchestrator.hpp"

#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"
#include "arachnet/runinputs.hpp"

#include <algorithm>

namespace arachnet {

namespace fs = std::filesystem;
namespace jr = jsonread;

// ---------------------------------------------------------------------------
// Names

namespace {
constexpr std::array<const char*, kStageCount> kStageNames{"querymind", "workflowscout", "solutionweaver", "curator"};
constexpr std::array<const char*, 7> kStatusNames{"pending",   "running", "awaiting_review", "approved",
                                                  "completed", "failed",  "rejected"};
}  // namespace

std::string_view stage_name(int stage) {
  if (stage < 1 || stage > kStageCount) throw Error(ErrorCode::kNotFound, "no stage " + std::to_string(stage));
  return kStageNames[stage - 1];
}

int parse_stage(std::string_view text) {
  for (int i = 0; i < kStageCount; ++i)
    if (text == kStageNames[i] || text == std::to_string(i + 1)) return i + 1;
  throw Error(ErrorCode::kNotFound, "unknown stage '" + std::string(text) + "'");
}

std::string_view to_string(StageStatus status) { return kStatusNames[static_cast<int>(status)]; }

StageStatus parse_stage_status(std::string_view text) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i)
    if (text == kStatusNames[i]) return static_cast<StageStatus>(i);
  throw Error(ErrorCode::kSchemaViolation, "unknown stage status '" + std::string(text) + "'");
}

std::string_view to_string(RunMode mode) { return mode == RunMode::kStandard ? "standard" : "expert"; }

RunMode parse_run_mode(std::string_view text) {
  if (text == "standard") return RunMode::kStandard;
  if (text == "expert") return RunMode::kExpert;
  throw Error(ErrorCode::kConfigError, "mode must be 'standard' or 'expert', got '" + std::string(text) + "'");
}

std::string artifact_name(int stage) { return "stage" + std::to_string(stage) + ".json"; }

// ---------------------------------------------------------------------------
// RunRecord

bool RunRecord::terminal() const {
  for (const auto& s : stages)
    if (s.status == StageStatus::kFailed || s.status == StageStatus::kRejected) return true;
  return completed();
}

std::string RunRecord::state() const {
  for (const auto& s : stages) {
    if (s.status == StageStatus::kFailed) return "failed";
    if (s.status == StageStatus::kRejected) return "rejected";
    if (s.status == StageStatus::kAwaitingReview) return "awaiting_review";
    if (s.status == StageStatus::kRunning || s.status == StageStatus::kApproved) return "running";
  }
  if (completed()) return "completed";
  return stages.front().status == StageStatus::kPending ? "pending" : "running";
}

Json to_json(const RunRecord& r) {
  Json stages = Json::array();
  for (int s = 1; s <= kStageCount; ++s) {
    const auto& st = r.stage(s);
    Json doc{{"name", stage_name(s)}, {"status", to_string(st.status)}, {"edited", st.edited}};
    doc["artifact"] = st.artifact.empty() ? Json(nullptr) : Json(st.artifact);
    if (!st.reviewer.empty()) doc["reviewer"] = st.reviewer;
    if (!st.error.empty()) doc["error"] = st.error;
    stages.push_back(doc);
  }
  return {{"run_id", r.run_id},
          {"query", r.query},
          {"mode", to_string(r.mode)},
          {"state", r.state()},
          {"stages", stages},
          {"registry_version", r.registry_version},
          {"created_ms", r.created_ms},
          {"updated_ms", r.updated_ms}};
}

RunRecord run_record_from_json(const Json& doc) {
  const std::string root = "run";
  jr::check_keys(doc, {"run_id", "query", "mode", "state", "stages", "registry_version", "created_ms", "updated_ms"},
                 root);
  RunRecord r;
  r.run_id = jr::string_field(doc, "run_id", root);
  r.query = jr::string_field(doc, "query", root);
  r.mode = parse_run_mode(jr::string_field(doc, "mode", root));
  r.registry_version = jr::field(doc, "registry_version", root).get<int>();
  r.created_ms = jr::field(doc, "created_ms", root).get<std::int64_t>();
  r.updated_ms = jr::field(doc, "updated_ms", root).get<std::int64_t>();
  const auto& stages = jr::array_field(doc, "stages", root);
  if (stages.size() != kStageCount) throw Error(ErrorCode::kSchemaViolation, "run.stages: expected 4 stages");
  for (int s = 1; s <= kStageCount; ++s) {
    const auto& st = stages[s - 1];
    auto w = root + ".stages[" + std::to_string(s - 1) + "]";
    if (jr::string_field(st, "name", w) != stage_name(s))
      throw Error(ErrorCode::kSchemaViolation, w + ".name: expected " + std::string(stage_name(s)));
    auto& out = r.stage(s);
    out.status = parse_stage_status(jr::string_field(st, "status", w));
    out.artifact = st.contains("artifact") && st["artifact"].is_string() ? st["artifact"].get<std::string>() : "";
    out.edited = jr::bool_field(st, "edited", w, false);
    out.reviewer = jr::opt_string(st, "reviewer", w);
    out.error = jr::opt_string(st, "error", w);
  }
  return r;
}

std::vector<std::string> gating_violations(const RunRecord& r) {
  std::vector<std::string> out;
  int active = 0;
  bool stopped = false;
  for (int s = 1; s <= kStageCount; ++s) {
    auto status = r.stage(s).status;
    auto name = std::string(stage_name(s));
    if (status != StageStatus::kPending && s > 1 && r.stage(s - 1).status != StageStatus::kCompleted)
      out.push_back(name + " left pending before " + std::string(stage_name(s - 1)) + " completed");
    if (status == StageStatus::kRunning || status == StageStatus::kAwaitingReview || status == StageStatus::kApproved)
      ++active;
    if (r.mode == RunMode::kStandard && status == StageStatus::kAwaitingReview)
      out.push_back(name + " awaits review in standard mode");
    if (stopped && status != StageStatus::kPending) out.push_back(name + " moved after the run ended");
    if (status == StageStatus::kFailed || status == StageStatus::kRejected) stopped = true;
    if (status == StageStatus::kPending && !r.stage(s).artifact.empty()) out.push_back(name + " has an artifact while pending");
    if ((status == StageStatus::kCompleted || status == StageStatus::kAwaitingReview) && r.stage(s).artifact.empty())
      out.push_back(name + " has no artifact");
  }
  if (active > 1) out.push_back("more than one stage is active");
  return out;
}

ReviewDecision review_decision_from_json(const Json& doc, int stage) {
  const std::string root = "review";
  jr::check_keys(doc, {"decision", "artifact", "reason", "reviewer"}, root);
  ReviewDecision d;
  d.stage = stage;
  auto kind = jr::string_field(doc, "decision", root);
  if (kind == "approve") {
    d.kind = DecisionKind::kApprove;
  } else if (kind == "edit") {
    d.kind = DecisionKind::kEdit;
    d.replacement = jr::field(doc, "artifact", root);
  } else if (kind == "reject") {
    d.kind = DecisionKind::kReject;
  } else {
    throw Error(ErrorCode::kSchemaViolation, "review.decision: expected approve, edit or reject");
  }
  d.reason = jr::opt_string(doc, "reason", root);
  d.reviewer = jr::opt_string(doc, "reviewer", root);
  return d;
}

// ---------------------------------------------------------------------------
// ULIDs

UlidGenerator::UlidGenerator(Clock& clock, std::uint64_t seed) : clock_(clock), rng_(seed) {}

std::string UlidGenerator::next() {
  static constexpr char kAlphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
  std::lock_guard lock(mutex_);
  auto ms = clock_.now_ms();
  if (ms <= last_ms_) {
    ms = last_ms_;
    for (int i = 9; i >= 0 && ++last_random_[i] == 0; --i) {
    }
  } else {
    for (auto& b : last_random_) b = static_cast<std::uint8_t>(rng_() & 0xff);
    last_ms_ = ms;
  }
  std::string out(26, '0');
  auto t = static_cast<std::uint64_t>(ms) & ((std::uint64_t{1} << 48) - 1);
  for (int i = 9; i >= 0; --i) {
    out[i] = kAlphabet[t & 31];
    t >>= 5;
  }
  // 80 random bits as 16 base32 digits, most significant first.
  for (int i = 0; i < 16; ++i) {
    int bit = i * 5, value = 0;
    for (int k = 0; k < 5; ++k) {
      int b = bit + k;
      value = (value << 1) | ((last_random_[b / 8] >> (7 - b % 8)) & 1);
    }
    out[10 + i] = kAlphabet[value];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run stores

namespace {
void check_name(const std::string& name) {
  if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos)
    throw Error(ErrorCode::kNotFound, "invalid document name '" + name + "'");
}
}  // namespace

FsRunStore::FsRunStore(fs::path runs_dir) : dir_(std::move(runs_dir)) { fs::create_directories(dir_); }

void FsRunStore::save_record(const RunRecord& record) {
  check_name(record.run_id);
  fs::create_directories(run_dir(record.run_id));
  write_json_file(run_dir(record.run_id) / "run.json", to_json(record));
}

RunRecord FsRunStore::load_record(const std::string& run_id) const {
  check_name(run_id);
  auto path = run_dir(run_id) / "run.json";
  if (!fs::exists(path)) throw Error(ErrorCode::kNotFound, "unknown run '" + run_id + "'");
  return run_record_from_json(read_json_file(path));
}

bool FsRunStore::exists(const std::string& run_id) const {
  return !run_id.empty() && run_id.find('/') == std::string::npos && fs::exists(run_dir(run_id) / "run.json");
}

std::vector<std::string> FsRunStore::list() const {
  std::vector<std::string> out;
  for (const auto& item : fs::directory_iterator(dir_))
    if (item.is_directory() && fs::exists(item.path() / "run.json")) out.push_back(item.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

void FsRunStore::put_document(const std::string& run_id, const std::string& name, const Json& doc) {
  check_name(run_id);
  check_name(name);
  fs::create_directories(run_dir(run_id));
  write_json_file(run_dir(run_id) / name, doc);
}

std::optional<Json> FsRunStore::get_document(const std::string& run_id, const std::string& name) const {
  check_name(run_id);
  check_name(name);
  auto path = run_dir(run_id) / name;
  if (!fs::exists(path)) return std::nullopt;
  return read_json_file(path);
}

BlobStore& FsRunStore::blobs(const std::string& run_id) {
  check_name(run_id);
  std::lock_guard lock(mutex_);
  auto& slot = blobs_[run_id];
  if (!slot) slot = std::make_unique<FsBlobStore>(run_dir(run_id) / "blobs");
  return *slot;
}

void MemoryRunStore::save_record(const RunRecord& record) {
  std::lock_guard lock(mutex_);
  records_[record.run_id] = to_json(record);
}

RunRecord MemoryRunStore::load_record(const std::string& run_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(run_id);
  if (it == records_.end()) throw Error(ErrorCode::kNotFound, "unknown run '" + run_id + "'");
  return run_record_from_json(it->second);
}

bool MemoryRunStore::exists(const std::string& run_id) const {
  std::lock_guard lock(mutex_);
  return records_.count(run_id) > 0;
}

std::vector<std::string> MemoryRunStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

void MemoryRunStore::put_document(const std::string& run_id, const std::string& name, const Json& doc) {
  std::lock_guard lock(mutex_);
  documents_[run_id][name] = doc;
}

std::optional<Json> MemoryRunStore::get_document(const std::string& run_id, const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto run = documents_.find(run_id);
  if (run == documents_.end()) return std::nullopt;
  auto it = run->second.find(name);
  if (it == run->second.end()) return std::nullopt;
  return std::optional<Json>(std::in_place, it->second);
}

BlobStore& MemoryRunStore::blobs(const std::string& run_id) {
  std::lock_guard lock(mutex_);
  auto& slot = blobs_[run_id];
  if (!slot) slot = std::make_unique<MemoryBlobStore>();
  return *slot;
}

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator(RunStore& store, StageRunner& stages, Clock& clock, std::function<int()> registry_version,
                           std::uint64_t id_seed)
    : store_(store), stages_(stages), clock_(clock), registry_version_(std::move(registry_version)), ids_(clock, id_seed) {}

std::mutex& Orchestrator::run_mutex(const std::string& run_id) {
  std::lock_guard lock(locks_mutex_);
  auto& slot = locks_[run_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void Orchestrator::touch(RunRecord& record) {
  record.updated_ms = clock_.now_ms();
  store_.save_record(record);
}

std::vector<Json> Orchestrator::prior_artifacts(const RunRecord& record, int stage) const {
  std::vector<Json> out;
  for (int s = 1; s < stage; ++s) {
    auto doc = store_.get_document(record.run_id, record.stage(s).artifact);
    if (!doc) throw Error(ErrorCode::kNotFound, "artifact of stage " + std::string(stage_name(s)) + " is missing");
    out.push_back(*doc);
  }
  return out;
}

std::string Orchestrator::start_run(const std::string& query, RunMode mode) {
  RunRecord record;
  record.run_id = ids_.next();
  record.query = query;
  record.mode = mode;
  record.registry_version = registry_version_ ? registry_version_() : 0;
  record.created_ms = clock_.now_ms();
  record.updated_ms = record.created_ms;
  {
    std::lock_guard lock(run_mutex(record.run_id));
    store_.save_record(record);
    drive(record);
  }
  return record.run_id;
}

RunRecord Orchestrator::advance(const std::string& run_id) {
  std::lock_guard lock(run_mutex(run_id));
  auto record = store_.load_record(run_id);
  drive(record);
  return record;
}

void Orchestrator::complete_stage(RunRecord& record, int stage, const Json& artifact) {
  auto& st = record.stage(stage);
  try {
    auto prior = prior_artifacts(record, stage);
    auto kept = stages_.finalize(stage, artifact, record, prior, store_);
    if (kept != artifact) store_.put_document(record.run_id, artifact_name(stage), kept);
    auto failure = stages_.failure(stage, kept, record, store_);
    st.status = failure ? StageStatus::kFailed : StageStatus::kCompleted;
    if (failure) st.error = *failure;
  } catch (const std::exception& e) {
    st.status = StageStatus::kFailed;
    st.error = e.what();
  }
  touch(record);
}

void Orchestrator::drive(RunRecord& record) {
  while (!record.terminal()) {
    int s = 1;
    while (record.stage(s).status == StageStatus::kCompleted) ++s;
    auto& st = record.stage(s);
    if (st.status == StageStatus::kAwaitingReview) return;
    if (st.status == StageStatus::kApproved) {
      auto artifact = store_.get_document(record.run_id, st.artifact);
      if (!artifact) throw Error(ErrorCode::kNotFound, "approved artifact is missing");
      complete_stage(record, s, *artifact);
      continue;
    }
    // pending, or running when a previous process died mid-stage
    st.status = StageStatus::kRunning;
    st.error.clear();
    touch(record);
    Json artifact;
    try {
      artifact = stages_.run(s, record, prior_artifacts(record, s), store_);
    } catch (const std::exception& e) {
      st.status = StageStatus::kFailed;
      st.error = e.what();
      touch(record);
      return;
    }
    store_.put_document(record.run_id, artifact_name(s), artifact);
    st.artifact = artifact_name(s);
    if (record.mode == RunMode::kExpert) {
      st.status = StageStatus::kAwaitingReview;
      touch(record);
      return;
    }
    complete_stage(record, s, artifact);
  }
}

RunRecord Orchestrator::submit_review(const std::string& run_id, const ReviewDecision& d) {
  std::lock_guard lock(run_mutex(run_id));
  auto record = store_.load_record(run_id);
  if (d.stage < 1 || d.stage > kStageCount) throw Error(ErrorCode::kNotFound, "no stage " + std::to_string(d.stage));
  auto& st = record.stage(d.stage);
  if (record.terminal() || st.status != StageStatus::kAwaitingReview)
    throw Error(ErrorCode::kWrongState, "stage " + std::string(stage_name(d.stage)) + " is " +
                                            std::string(to_string(st.status)) + ", not awaiting review");
  switch (d.kind) {
    case DecisionKind::kReject:
      st.status = StageStatus::kRejected;
      st.error = d.reason.empty() ? "rejected" : d.reason;
      st.reviewer = d.reviewer;
      touch(record);
      return record;
    case DecisionKind::kEdit: {
      auto prior = prior_artifacts(record, d.stage);
      auto messages = stages_.validate_edit(d.stage, d.replacement, record, prior);
      if (!messages.empty())
        throw Error(ErrorCode::kInvalidEdit, "edited " + std::string(stage_name(d.stage)) + " artifact is invalid",
                    messages);
      auto orig = st.artifact + ".orig";
      if (!store_.get_document(run_id, orig)) {
        auto current = store_.get_document(run_id, st.artifact);
        if (current) store_.put_document(run_id, orig, *current);
      }
      store_.put_document(run_id, st.artifact, d.replacement);
      st.edited = true;
      st.reviewer = d.reviewer;
      st.status = StageStatus::kApproved;
      touch(record);
      complete_stage(record, d.stage, d.replacement);
      break;
    }
    case DecisionKind::kApprove: {
      st.reviewer = d.reviewer;
      st.status = StageStatus::kApproved;
      touch(record);
      auto artifact = store_.get_document(run_id, st.artifact);
      complete_stage(record, d.stage, artifact.value_or(Json()));
      break;
    }
  }
  drive(record);
  return record;
}

// ---------------------------------------------------------------------------
// Configuration

Json PipelineConfig::to_json() const {
  return {{"backend", backend.to_json()},
          {"budget", {{"k", budget.k}, {"max_expansions", budget.max_expansions}}},
          {"dataset_dir", dataset_dir.string()},
          {"parallel_execution", parallel_execution},
          {"min_support", min_support}};
}

PipelineConfig pipeline_config_from_json(const Json& doc) {
  PipelineConfig c;
  if (!doc.is_object()) throw Error(ErrorCode::kConfigError, "config: expected an object");
  for (const auto& [key, _] : doc.items())
    if (key != "backend" && key != "budget" && key != "dataset_dir" && key != "parallel_execution" &&
        key != "min_support")
      throw Error(ErrorCode::kConfigError, "config: unknown key '" + key + "'");
  try {
    if (doc.contains("backend")) c.backend = backend_config_from_json(doc["backend"]);
    if (doc.contains("budget")) {
      const auto& b = doc["budget"];
      if (!b.is_object()) throw Error(ErrorCode::kConfigError, "config.budget: expected an object");
      for (const auto& [key, v] : b.items()) {
        if (key == "k") {
          c.budget.k = v.get<int>();
        } else if (key == "max_expansions") {
          c.budget.max_expansions = v.get<std::size_t>();
        } else {
          throw Error(ErrorCode::kConfigError, "config.budget: unknown key '" + key + "'");
        }
      }
      if (c.budget.k < 1) throw Error(ErrorCode::kConfigError, "config.budget.k must be >= 1");
    }
    if (doc.contains("dataset_dir")) c.dataset_dir = doc["dataset_dir"].get<std::string>();
    if (doc.contains("parallel_execution")) c.parallel_execution = doc["parallel_execution"].get<bool>();
    if (doc.contains("min_support")) c.min_support = doc["min_support"].get<int>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("config: ") + e.what());
  }
  if (c.min_support < 1) throw Error(ErrorCode::kConfigError, "config.min_support must be >= 1");
  return c;
}

// ---------------------------------------------------------------------------
// Real stages

ArachnetStages::ArachnetStages(RegistryStore& registry, std::shared_ptr<PlannerBackend> backend, PipelineConfig config,
                               Clock* clock)
    : registry_(registry), backend_(std::move(backend)), config_(std::move(config)), clock_(clock) {
  auto dir = config_.dataset_dir.empty() ? fs::path(ARACHNET_SOURCE_DIR) / "fixtures" / "minitopo" : config_.dataset_dir;
  dataset_ = std::make_shared<const toolsim::FixtureDataset>(toolsim::FixtureDataset::load(dir));
}

AdapterSet ArachnetStages::adapters(const RegistryPtr& registry) const {
  AdapterSet base;
  base.add(std::make_shared<toolsim::ToolSimAdapter>(dataset_));
  AdapterSet all = base;
  all.add(std::make_shared<CompositeAdapter>(registry, base));
  return all;
}

Json ArachnetStages::execute_plan(const ExecutablePlan& plan, const RunRecord& record, const std::vector<Json>& prior,
                                  RunStore& store) {
  auto registry = registry_.load(record.registry_version);
  auto graph = sub_problem_graph_from_json(prior.at(0));
  auto inputs = materialize_run_inputs(graph.intent, *registry, *dataset_);
  auto& blobs = store.blobs(record.run_id);
  ExecutorOptions options;
  options.parallel = config_.parallel_execution;
  options.clock = clock_;
  options.before_step = before_step;
  auto result = execute(plan, adapters(registry), inputs, blobs, options);
  auto doc = to_json(result);
  doc["success_criteria"] = to_json(evaluate_criteria(graph, plan, result, blobs));
  store.put_document(record.run_id, kResultDocument, doc);
  return to_json(plan);
}

Json ArachnetStages::run(int stage, const RunRecord& record, const std::vector<Json>& prior, RunStore& store) {
  auto registry = registry_.load(record.registry_version);
  switch (stage) {
    case 1: return to_json(analyze(record.query, *registry, *backend_));
    case 2: {
      auto graph = sub_problem_graph_from_json(prior.at(0));
      auto hints = backend_->hints(graph, summarize_registry(*registry));
      return to_json(explore(graph, *registry, config_.budget, &hints));
    }
    case 3: {
      auto design = workflow_design_from_json(prior.at(1));
      return execute_plan(compile(design, *registry), record, prior, store);
    }
    case 4: return curate(record, store);
  }
  throw Error(ErrorCode::kNotFound, "no stage " + std::to_string(stage));
}

std::vector<std::string> ArachnetStages::validate_edit(int stage, const Json& replacement, const RunRecord& record,
                                                       const std::vector<Json>& /*prior*/) {
  auto registry = registry_.load(record.registry_version);
  try {
    switch (stage) {
      case 1: {
        auto graph = sub_problem_graph_from_json(replacement);
        auto problems = validate_graph(graph, *registry);
        if (problems.empty() && !assess_feasibility(graph, *registry).feasibility.feasible)
          problems.push_back("sub-problem graph is infeasible with this registry");
        return problems;
      }
      case 2: return validate_design(workflow_design_from_json(replacement), *registry).messages();
      case 3: {
        auto plan = executable_plan_from_json(replacement);
        std::vector<std::string> problems;
        std::set<std::string> seen;
        for (const auto& s : plan.steps) {
          if (!s.is_adapter && !registry->find(s.capability_id))
            problems.push_back("step " + s.id + ": unknown capability '" + s.capability_id + "'");
          if (s.is_adapter && !s.translation) problems.push_back("step " + s.id + ": adapter without translation");
          for (const auto& [port, src] : s.input_bindings)
            if (src.kind == Source::Kind::kStepOutput && !seen.count(src.ref))
              problems.push_back("step " + s.id + "." + port + ": reads '" + src.ref + "' before it runs");
          if (!seen.insert(s.id).second) problems.push_back("duplicate step id '" + s.id + "'");
        }
        return problems;
      }
      case 4: {
        if (!replacement.is_object() || !replacement.contains("selected") || !replacement["selected"].is_array())
          return {"curator artifact needs a 'selected' array"};
        std::vector<std::string> problems;
        for (const auto& id : replacement["selected"])
          if (!id.is_string() || !id.get<std::string>().starts_with("curated."))
            problems.push_back("selected: '" + id.dump() + "' is not a curated composite id");
        return problems;
      }
    }
  } catch (const Error& e) {
    std::vector<std::string> problems{e.what()};
    problems.insert(problems.end(), e.details().begin(), e.details().end());
    return problems;
  } catch (const Json::exception& e) {
    return {e.what()};
  }
  return {"no stage " + std::to_string(stage)};
}

namespace {

// Successful executions in the store: this run plus every run whose
// execution stage completed.
struct Evidence {
  std::vector<RunTrace> traces;
  std::map<std::string, const BlobStore*> blobs;
};

Evidence collect_evidence(const RunRecord& record, RunStore& store) {
  Evidence ev;
  for (const auto& id : store.list()) {
    if (id != record.run_id && store.load_record(id).stage(3).status != StageStatus::kCompleted) continue;
    auto plan_doc = store.get_document(id, artifact_name(3));
    auto result_doc = store.get_document(id, kResultDocument);
    if (!plan_doc || !result_doc) continue;
    auto trace = make_trace(id, executable_plan_from_json(*plan_doc), execution_result_from_json(*result_doc));
    if (!trace.success) continue;
    ev.traces.push_back(std::move(trace));
    ev.blobs[id] = &store.blobs(id);
  }
  return ev;
}

}  // namespace

Json ArachnetStages::curate(const RunRecord& record, RunStore& store) {
  auto latest = registry_.load_latest();
  auto [traces, blobs] = collect_evidence(record, store);
  Json proposals = Json::array();
  Json selected = Json::array();
  for (const auto& p : mine_patterns(traces, *latest, config_.min_support)) {
    Json entry{{"pattern", to_json(p)}};
    try {
      auto verdict = validate_composite(p, blobs, *latest, adapters(latest));
      entry["verdict"] = to_json(verdict);
      if (verdict.passed) selected.push_back(p.proposed_entry.id);
    } catch (const Error& e) {
      entry["verdict"] = nullptr;
      entry["error"] = e.what();
    }
    proposals.push_back(entry);
  }
  return {{"registry_version", latest->version},
          {"runs_considered", traces.size()},
          {"proposals", proposals},
          {"selected", selected},
          {"promoted", Json::array()}};
}

Json ArachnetStages::finalize(int stage, const Json& artifact, const RunRecord& record, const std::vector<Json>& prior,
                              RunStore& store) {
  if (stage == 3 && record.stage(3).edited) {
    auto plan = executable_plan_from_json(artifact);
    plan.plan_id = plan.compute_id();
    return execute_plan(plan, record, prior, store);
  }
  if (stage != 4) return artifact;
  auto out = artifact;
  std::set<std::string> wanted;
  for (const auto& id : artifact.at("selected")) wanted.insert(id.get<std::string>());
  out["promoted"] = Json::array();
  out["skipped"] = Json::array();
  if (wanted.empty()) return out;
  // Promotion re-derives patterns and verdicts from the store, so an edited
  // artifact can only narrow what gets promoted.
  auto latest = registry_.load_latest();
  auto [traces, blobs] = collect_evidence(record, store);
  for (const auto& p : mine_patterns(traces, *latest, config_.min_support)) {
    if (!wanted.count(p.proposed_entry.id)) continue;
    try {
      auto verdict = validate_composite(p, blobs, *latest, adapters(latest));
      int version = promote(p, verdict, registry_);
      out["promoted"].push_back({{"id", p.proposed_entry.id}, {"registry_version", version}});
    } catch (const Error& e) {
      out["skipped"].push_back({{"id", p.proposed_entry.id}, {"reason", e.what()}});
    }
  }
  return out;
}

std::optional<std::string> ArachnetStages::failure(int stage, const Json&, const RunRecord& record, RunStore& store) {
  if (stage != 3) return std::nullopt;
  auto doc = store.get_document(record.run_id, kResultDocument);
  if (!doc) return "execution result is missing";
  auto result = execution_result_from_json(*doc);
  if (result.success) return std::nullopt;
  return "execution failed at step " + result.failed_step + ": " + result.reason;
}

// ---------------------------------------------------------------------------
// DOT

std::string artifact_dot(int stage, const Json& artifact) {
  switch (stage) {
    case 1: return sub_problem_graph_to_dot(sub_problem_graph_from_json(artifact));
    case 2: return candidate_to_dot(workflow_design_from_json(artifact).chosen);
    case 3: return export_plan(executable_plan_from_json(artifact), ExportFormat::kDot);
  }
  throw Error(ErrorCode::kNotFound, "stage " + std::string(stage_name(stage)) + " has no graph view");
}

}  // namespace arachnet
