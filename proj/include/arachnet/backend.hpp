#pragma once

// Planner backends: natural language -> QueryIntent, plus optional
// rationale/preference hints for WorkflowScout. Only this module talks to
// the network.

#include "arachnet/querymind.hpp"
#include "arachnet/registry.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace arachnet {

constexpr std::int64_t kFixtureReferenceTime = 1709856000;  // 2024-03-08T00:00:00Z
constexpr const char* kKeywordRulesVersion = "keyword-rules/2";

enum class BackendKind { kLlm, kDeterministic, kScripted };

std::string_view to_string(BackendKind kind);

struct BackendConfig {
  BackendKind kind = BackendKind::kDeterministic;
  std::string endpoint;  // llm only
  std::string model;
  int timeout_ms = 30000;
  int max_repair_attempts = 3;  // total attempts including the first request
  std::string auth_env;         // name of the environment variable holding the key
  // Reference "now" for relative time expressions ("three days ago");
  // defaults to the end of the fixture observation period.
  std::int64_t reference_time = kFixtureReferenceTime;
  std::filesystem::path prompts_dir;

  // Never contains the credential value, only the variable name.
  Json to_json() const;
};

// Errors: ConfigError.
BackendConfig backend_config_from_json(const Json& doc);

struct BackendHints {
  std::string rationale;
  std::vector<std::string> preferred_capabilities;
};

class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  // Errors: IntentError, TransportError.
  virtual QueryIntent propose_intent(const std::string& query, const std::string& registry_summary,
                                     const std::vector<std::string>& vocabulary) = 0;
  virtual BackendHints hints(const SubProblemGraph&, const std::string& /*registry_summary*/) { return {}; }
  // Repairs issued by the most recent propose_intent call.
  virtual int last_repairs() const { return 0; }
};

// One line per capability: "id: description [in kinds -> out kinds]".
std::string summarize_registry(const Registry& registry);
constexpr std::size_t kSummaryLineLimit = 120;

// Versioned keyword-rule table; see docs/expansion_rules.md.
class DeterministicBackend final : public PlannerBackend {
 public:
  explicit DeterministicBackend(std::int64_t reference_time) : reference_time_(reference_time) {}
  QueryIntent propose_intent(const std::string& query, const std::string& registry_summary,
                             const std::vector<std::string>& vocabulary) override;

 private:
  std::int64_t reference_time_;
};

// --- LLM path ---------------------------------------------------------------

class Transport {
 public:
  virtual ~Transport() = default;
  // Sends a chat-completion request; returns the assistant message content.
  // Errors: TransportError.
  virtual std::string complete(const Json& request) = 0;
};

// Process-wide switch; when off every HttpTransport call fails with
// TransportError before touching a socket.
void set_network_enabled(bool enabled);
bool network_enabled();

class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string endpoint, int timeout_ms, std::string auth_env);
  std::string complete(const Json& request) override;

 private:
  std::string endpoint_;
  int timeout_ms_;
  std::string auth_env_;
};

// Replays canned responses in order; records every request.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(std::vector<std::string> responses) : responses_(std::move(responses)) {}
  std::string complete(const Json& request) override;

  std::vector<Json> requests() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
  std::vector<Json> requests_;
};

struct PromptTemplate {
  std::string stage;  // intent | rationale
  std::string text;   // placeholders {query} {registry_summary} {vocabulary}

  // Errors: ConfigError on unknown or unresolved placeholders.
  std::string render(const std::map<std::string, std::string>& values) const;
};

PromptTemplate load_prompt(const std::filesystem::path& prompts_dir, const std::string& stage);

class LlmBackend final : public PlannerBackend {
 public:
  LlmBackend(BackendConfig config, std::shared_ptr<Transport> transport);
  QueryIntent propose_intent(const std::string& query, const std::string& registry_summary,
                             const std::vector<std::string>& vocabulary) override;
  BackendHints hints(const SubProblemGraph& graph, const std::string& registry_summary) override;
  int last_repairs() const override { return last_repairs_; }

 private:
  Json request_for(const std::vector<Json>& messages) const;

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  PromptTemplate intent_prompt_;
  PromptTemplate rationale_prompt_;
  std::atomic<int> last_repairs_{0};
};

// Builds the configured backend. Errors: ConfigError.
std::unique_ptr<PlannerBackend> make_backend(const BackendConfig& config,
                                             std::shared_ptr<Transport> transport = nullptr);

}  // namespace arachnet
