#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "arachnet/backend.hpp"

#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"
#include "arachnet/util.hpp"

#include <cctype>
#include <cstdlib>
#include <regex>
#include <sstream>

namespace arachnet {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kLlm: return "llm";
    case BackendKind::kDeterministic: return "deterministic";
    case BackendKind::kScripted: return "scripted";
  }
  return "deterministic";
}

Json BackendConfig::to_json() const {
  Json doc{{"kind", to_string(kind)},
           {"model", model},
           {"timeout_ms", timeout_ms},
           {"max_repair_attempts", max_repair_attempts},
           {"temperature", 0},
           {"auth_env", auth_env},
           {"reference_time", format_iso8601(reference_time)},
           {"prompts_dir", prompts_dir.string()}};
  if (!endpoint.empty()) doc["endpoint"] = endpoint;
  return doc;
}

BackendConfig backend_config_from_json(const Json& doc) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "backend config: " + what); };
  if (!doc.is_object()) fail("expected an object");
  static const std::set<std::string> known{"kind",    "endpoint",       "model",      "timeout_ms", "max_repair_attempts",
                                           "auth_env", "reference_time", "prompts_dir", "temperature"};
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) fail("unknown field '" + key + "'");
  BackendConfig c;
  auto str = [&](const char* key, std::string& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_string()) fail(std::string(key) + " must be a string");
    out = doc[key].get<std::string>();
  };
  std::string kind = "deterministic";
  str("kind", kind);
  if (kind == "llm") c.kind = BackendKind::kLlm;
  else if (kind == "deterministic") c.kind = BackendKind::kDeterministic;
  else if (kind == "scripted") c.kind = BackendKind::kScripted;
  else fail("kind must be llm|deterministic|scripted");
  str("endpoint", c.endpoint);
  str("model", c.model);
  str("auth_env", c.auth_env);
  std::string prompts;
  str("prompts_dir", prompts);
  c.prompts_dir = prompts;
  auto integer = [&](const char* key, int& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number_integer()) fail(std::string(key) + " must be an integer");
    out = doc[key].get<int>();
  };
  integer("timeout_ms", c.timeout_ms);
  integer("max_repair_attempts", c.max_repair_attempts);
  if (doc.contains("temperature") && !(doc["temperature"].is_number() && doc["temperature"].get<double>() == 0))
    fail("temperature is fixed at 0");
  if (doc.contains("reference_time")) {
    std::string ts;
    str("reference_time", ts);
    try {
      c.reference_time = parse_iso8601(ts);
    } catch (const Error&) {
      fail("reference_time must be an ISO-8601 UTC timestamp");
    }
  }
  if (c.max_repair_attempts < 1) fail("max_repair_attempts must be at least 1");
  if (c.timeout_ms < 1) fail("timeout_ms must be positive");
  if (c.kind == BackendKind::kLlm && c.endpoint.empty()) fail("llm backend needs an endpoint");
  return c;
}

std::string summarize_registry(const Registry& registry) {
  std::string out;
  for (const auto& [id, entry] : registry.entries) {
    std::vector<std::string> in, outs;
    for (const auto& p : entry.inputs) in.push_back(p.data.kind);
    for (const auto& p : entry.outputs) outs.push_back(p.data.kind);
    std::string signature = " [" + join(in, ", ") + " -> " + join(outs, ", ") + "]";
    std::string head = id + ": ";
    std::string description = entry.description;
    std::size_t room = kSummaryLineLimit > head.size() + signature.size() ? kSummaryLineLimit - head.size() - signature.size() : 0;
    if (description.size() > room) description = room >= 3 ? description.substr(0, room - 3) + "..." : "";
    std::string line = head + description + signature;
    if (line.size() > kSummaryLineLimit) line = line.substr(0, kSummaryLineLimit);
    out += line + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic keyword rules

namespace {

std::string lower(std::string text) {
  for (auto& ch : text) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return text;
}

bool has(const std::string& haystack, const char* needle) { return haystack.find(needle) != std::string::npos; }

std::optional<int> count_word(const std::string& word) {
  static const std::map<std::string, int> words{{"one", 1}, {"two", 2},   {"three", 3}, {"four", 4},  {"five", 5},
                                                {"six", 6}, {"seven", 7}, {"eight", 8}, {"nine", 9}, {"ten", 10}};
  auto w = lower(word);
  if (auto it = words.find(w); it != words.end()) return it->second;
  if (!w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return std::stoi(w);
  return std::nullopt;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

constexpr std::int64_t kDay = 86400;

// "three days ago", "past 3 days", "last two days".
std::optional<TimeWindow> window_in(const std::string& query, std::int64_t now) {
  std::smatch m;
  static const std::regex ago(R"((\w+) days? ago)", std::regex::icase);
  static const std::regex past(R"((?:past|last) (\w+) days?)", std::regex::icase);
  if (std::regex_search(query, m, ago) || std::regex_search(query, m, past)) {
    if (auto n = count_word(m[1].str())) return TimeWindow{now - *n * kDay, now};
  }
  return std::nullopt;
}

Classification flags(bool spatial, bool temporal, bool causal, bool dependency) {
  Classification c;
  c.spatial = spatial;
  c.temporal = temporal;
  c.causal = causal;
  c.data_dependency = dependency;
  return c;
}

}  // namespace

QueryIntent DeterministicBackend::propose_intent(const std::string& query, const std::string&,
                                                 const std::vector<std::string>& vocabulary) {
  if (trim(query).empty()) throw Error(ErrorCode::kIntentError, "query is empty");
  auto text = trim(query);
  if (text.front() == '{') {
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kIntentError, "structured intent is not valid JSON", {e.what()});
    }
    auto errors = validate_intent_json(doc);
    if (!errors.empty()) throw Error(ErrorCode::kIntentError, "structured intent failed validation", errors);
    return intent_from_json(doc);
  }

  const auto q = lower(text);
  auto declared = [&](const char* kind) { return std::find(vocabulary.begin(), vocabulary.end(), kind) != vocabulary.end(); };
  std::smatch m;
  QueryIntent intent;

  // Rule 1: "<name> cable failure" / "cable <name> failure" at country, AS or cable level.
  static const std::regex cable_named(R"((?:due to|of|from)\s+(?:the\s+)?(?:cable\s+)?([A-Za-z0-9][\w.\-]*)\s+(?:cable\s+)?failure)",
                                      std::regex::icase);
  static const std::regex cable_plain(R"(cable\s+([A-Za-z0-9][\w.\-]*)\s+fail)", std::regex::icase);
  if (has(q, "fail") && has(q, "cable") && has(q, "impact") &&
      (std::regex_search(text, m, cable_named) || std::regex_search(text, m, cable_plain))) {
    intent.goal_kind = "impact_table";
    intent.subject = {SubjectType::kCable, {m[1].str()}};
    intent.aggregation = has(q, "country") ? Aggregation::kCountry
                         : (has(q, " as level") || has(q, "asn")) ? Aggregation::kAsn
                         : has(q, "per cable") ? Aggregation::kCable
                                               : Aggregation::kCountry;
    intent.classification = flags(true, false, false, true);
    return intent;
  }

  // Rule 2: hazard impact with a failure probability.
  std::vector<std::string> hazards;
  for (const char* h : {"earthquake", "hurricane"})
    if (has(q, h)) hazards.push_back(h);
  if (!hazards.empty()) {
    intent.goal_kind = "impact_table";
    intent.subject = {SubjectType::kHazardEvent, hazards};
    intent.aggregation = Aggregation::kCountry;
    static const std::regex percent(R"((\d+(?:\.\d+)?)\s*%)");
    static const std::regex probability(R"(probability\s+(?:of\s+)?(0(?:\.\d+)?|1(?:\.0+)?)\b)", std::regex::icase);
    Rational p = 1;
    if (std::regex_search(text, m, percent)) p = parse_rational(m[1].str()) / 100;
    else if (std::regex_search(text, m, probability)) p = parse_rational(m[1].str());
    intent.parameters["failure_probability"] = to_string(p);
    intent.classification = flags(true, false, false, false);
    return intent;
  }

  // Rule 3: cascading failures between two regions.
  static const std::regex between(R"(between\s+([A-Za-z][\w\-]*)\s+and\s+([A-Za-z][\w\-]*))", std::regex::icase);
  if (has(q, "cascad") && std::regex_search(text, m, between)) {
    intent.goal_kind = "cascade_timeline";
    intent.subject = {SubjectType::kRegionPair, {capitalized(m[1].str()), capitalized(m[2].str())}};
    intent.aggregation = Aggregation::kAsn;
    intent.time_window = window_in(text, reference_time_).value_or(TimeWindow{reference_time_ - 3 * kDay, reference_time_});
    intent.classification = flags(true, true, true, true);
    return intent;
  }

  // Rule 4: latency increase between probe and destination regions.
  static const std::regex probes(R"(([A-Za-z][\w\-]*?)(?:an)?\s+probes?\s+to\s+([A-Za-z][\w\-]*?)(?:n)?\s+destinations?)",
                                 std::regex::icase);
  if (has(q, "latency") && (has(q, "increase") || has(q, "spike")) && std::regex_search(text, m, probes)) {
    auto window = window_in(text, reference_time_);
    if (window && declared("ranked_cable_table")) {
      auto region = [](std::string adjective) {
        static const std::map<std::string, std::string> names{
            {"european", "Europe"}, {"asian", "Asia"}, {"african", "Africa"}, {"american", "America"}};
        auto l = lower(adjective);
        for (const auto& [adj, name] : names)
          if (l == adj || l + "an" == adj || l + "n" == adj) return name;
        return capitalized(adjective);
      };
      intent.goal_kind = "ranked_cable_table";
      intent.subject = {SubjectType::kRegionPair, {region(m[1].str()), region(m[2].str())}};
      intent.aggregation = Aggregation::kCable;
      intent.time_window = window;
      intent.classification = flags(true, true, true, true);
      return intent;
    }
  }
  throw Error(ErrorCode::kIntentError, "no keyword rule matches the query (" + std::string(kKeywordRulesVersion) + ")",
              {"query: " + text});
}

// ---------------------------------------------------------------------------
// Transports

namespace {
std::atomic<bool> g_network_enabled{true};
}

void set_network_enabled(bool enabled) { g_network_enabled = enabled; }
bool network_enabled() { return g_network_enabled; }

HttpTransport::HttpTransport(std::string endpoint, int timeout_ms, std::string auth_env)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms), auth_env_(std::move(auth_env)) {}

std::string HttpTransport::complete(const Json& request) {
  if (!network_enabled()) throw Error(ErrorCode::kTransportError, "network access is disabled");
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_, m, url)) throw Error(ErrorCode::kTransportError, "bad endpoint URL: " + endpoint_);
  httplib::Client client(m[1].str());
  auto seconds = timeout_ms_ / 1000, micros = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  httplib::Headers headers;
  if (!auth_env_.empty()) {
    if (const char* key = std::getenv(auth_env_.c_str())) headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Post(path, headers, request.dump(), "application/json");
  if (!res) throw Error(ErrorCode::kTransportError, "request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::kTransportError, "endpoint answered HTTP " + std::to_string(res->status));
  try {
    auto doc = Json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kTransportError, std::string("unexpected response envelope: ") + e.what());
  }
}

std::string ScriptedTransport::complete(const Json& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  if (next_ >= responses_.size()) throw Error(ErrorCode::kTransportError, "scripted transport has no more responses");
  return responses_[next_++];
}

std::vector<Json> ScriptedTransport::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

// ---------------------------------------------------------------------------
// Prompts

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  static const std::set<std::string> allowed{"query", "registry_summary", "vocabulary"};
  static const std::regex placeholder(R"(\{([a-z_]+)\})");
  std::string out;
  auto begin = text.cbegin();
  for (std::sregex_iterator it(text.begin(), text.end(), placeholder), end; it != end; ++it) {
    auto name = (*it)[1].str();
    if (!allowed.count(name)) throw Error(ErrorCode::kConfigError, stage + " prompt: unknown placeholder {" + name + "}");
    auto v = values.find(name);
    if (v == values.end()) throw Error(ErrorCode::kConfigError, stage + " prompt: unresolved placeholder {" + name + "}");
    out.append(begin, (*it)[0].first);
    out += v->second;
    begin = (*it)[0].second;
  }
  out.append(begin, text.cend());
  return out;
}

PromptTemplate load_prompt(const std::filesystem::path& prompts_dir, const std::string& stage) {
  auto path = prompts_dir / (stage + ".txt");
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kConfigError, "missing prompt template " + path.string());
  return {stage, read_text_file(path)};
}

// ---------------------------------------------------------------------------
// LLM backend

namespace {

std::filesystem::path prompts_dir_of(const BackendConfig& config) {
  return config.prompts_dir.empty() ? std::filesystem::path(ARACHNET_SOURCE_DIR) / "prompts" : config.prompts_dir;
}

Json intent_schema() {
  Json flag{{"type", "boolean"}};
  Json strings{{"type", "array"}, {"items", {{"type", "string"}}}};
  Json subject{{"type", "object"},
               {"required", {"entity_type", "identifiers"}},
               {"properties", {{"entity_type", {{"enum", {"cable", "hazard_event", "region_pair", "none"}}}},
                               {"identifiers", strings}}}};
  Json window{{"type", {"object", "null"}},
              {"properties", {{"start", {{"type", "string"}}}, {"end", {{"type", "string"}}}}}};
  Json classification{{"type", "object"},
                      {"properties", {{"spatial", flag}, {"temporal", flag}, {"causal", flag}, {"data_dependency", flag}}}};
  Json properties{{"goal_kind", {{"type", "string"}}},
                  {"subject", subject},
                  {"aggregation", {{"enum", {"country", "asn", "cable", "none"}}}},
                  {"time_window", window},
                  {"parameters", {{"type", "object"}, {"additionalProperties", {{"type", "string"}}}}},
                  {"classification", classification}};
  return {{"type", "object"},
          {"additionalProperties", false},
          {"required", {"goal_kind", "subject", "aggregation", "time_window", "parameters", "classification"}},
          {"properties", properties}};
}

}  // namespace

LlmBackend::LlmBackend(BackendConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) throw Error(ErrorCode::kConfigError, "llm backend needs a transport");
  if (config_.max_repair_attempts < 1) throw Error(ErrorCode::kConfigError, "max_repair_attempts must be at least 1");
  intent_prompt_ = load_prompt(prompts_dir_of(config_), "intent");
  rationale_prompt_ = load_prompt(prompts_dir_of(config_), "rationale");
}

Json LlmBackend::request_for(const std::vector<Json>& messages) const {
  return {{"model", config_.model},
          {"temperature", 0},
          {"messages", messages},
          {"response_format",
           {{"type", "json_schema"}, {"json_schema", {{"name", "query_intent"}, {"strict", true}, {"schema", intent_schema()}}}}}};
}

QueryIntent LlmBackend::propose_intent(const std::string& query, const std::string& registry_summary,
                                       const std::vector<std::string>& vocabulary) {
  if (trim(query).empty()) throw Error(ErrorCode::kIntentError, "query is empty");
  auto system = intent_prompt_.render(
      {{"query", query}, {"registry_summary", registry_summary}, {"vocabulary", join(vocabulary, ", ")}});
  std::vector<Json> messages{{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", query}}};
  std::vector<std::string> all_errors;
  last_repairs_ = 0;
  for (int attempt = 1; attempt <= config_.max_repair_attempts; ++attempt) {
    auto content = transport_->complete(request_for(messages));
    std::vector<std::string> errors;
    Json doc;
    try {
      doc = Json::parse(content);
      // Vocabulary membership is left to expansion (UnknownGoalKind).
      errors = validate_intent_json(doc);
    } catch (const Json::exception& e) {
      errors.push_back(std::string("response is not valid JSON: ") + e.what());
    }
    if (errors.empty()) {
      last_repairs_ = attempt - 1;
      return intent_from_json(doc);
    }
    for (const auto& e : errors) all_errors.push_back("attempt " + std::to_string(attempt) + ": " + e);
    std::string repair = "The previous response failed validation:\n";
    for (const auto& e : errors) repair += "- " + e + "\n";
    repair += "Return only a corrected JSON object matching the schema.";
    messages.push_back({{"role", "assistant"}, {"content", content}});
    messages.push_back({{"role", "user"}, {"content", repair}});
  }
  last_repairs_ = config_.max_repair_attempts - 1;
  throw Error(ErrorCode::kIntentError,
              "backend produced no valid intent after " + std::to_string(config_.max_repair_attempts) + " attempt(s)",
              all_errors);
}

BackendHints LlmBackend::hints(const SubProblemGraph& graph, const std::string& registry_summary) {
  std::vector<std::string> vocabulary;
  for (const auto& sp : graph.sub_problems) vocabulary.push_back(sp.id + ": " + sp.required_output.kind);
  auto system = rationale_prompt_.render({{"query", to_json(graph.intent).dump()},
                                          {"registry_summary", registry_summary},
                                          {"vocabulary", join(vocabulary, "; ")}});
  Json request{{"model", config_.model},
               {"temperature", 0},
               {"messages", {{{"role", "system"}, {"content", system}}}},
               {"response_format", {{"type", "json_object"}}}};
  // Hints are advisory: any failure degrades to no hints.
  try {
    auto doc = Json::parse(transport_->complete(request));
    BackendHints h;
    if (doc.contains("rationale") && doc["rationale"].is_string()) h.rationale = doc["rationale"].get<std::string>();
    if (doc.contains("preferred_capabilities") && doc["preferred_capabilities"].is_array())
      for (const auto& id : doc["preferred_capabilities"])
        if (id.is_string()) h.preferred_capabilities.push_back(id.get<std::string>());
    return h;
  } catch (const std::exception&) {
    return {};
  }
}

std::unique_ptr<PlannerBackend> make_backend(const BackendConfig& config, std::shared_ptr<Transport> transport) {
  switch (config.kind) {
    case BackendKind::kDeterministic: return std::make_unique<DeterministicBackend>(config.reference_time);
    case BackendKind::kLlm:
      if (!transport) transport = std::make_shared<HttpTransport>(config.endpoint, config.timeout_ms, config.auth_env);
      return std::make_unique<LlmBackend>(config, std::move(transport));
    case BackendKind::kScripted:
      if (!transport) throw Error(ErrorCode::kConfigError, "scripted backend needs a scripted transport");
      return std::make_unique<LlmBackend>(config, std::move(transport));
  }
  throw Error(ErrorCode::kConfigError, "unknown backend kind");
}

}  // namespace arachnet
