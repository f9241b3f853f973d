#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "arachnet/backend.hpp"
#include "arachnet/error.hpp"
#include "support.hpp"

#include <cstdlib>

using namespace arachnet;
using namespace testsupport;

namespace {

const Registry& fixture() {
  static Registry reg = load_registry(fixture_registry());
  return reg;
}

std::vector<std::string> vocabulary() {
  std::vector<std::string> out;
  for (const auto& s : fixture().vocabulary) out.push_back(s.kind);
  return out;
}

QueryIntent deterministic(const std::string& query) {
  DeterministicBackend backend(kFixtureReferenceTime);
  return backend.propose_intent(query, summarize_registry(fixture()), vocabulary());
}

const char* kValidIntent = R"({"goal_kind": "impact_table",
  "subject": {"entity_type": "cable", "identifiers": ["C1"]},
  "aggregation": "country", "time_window": null, "parameters": {},
  "classification": {"spatial": true, "temporal": false, "causal": false, "data_dependency": true}})";

BackendConfig scripted_config(int attempts) {
  BackendConfig c;
  c.kind = BackendKind::kScripted;
  c.max_repair_attempts = attempts;
  return c;
}

}  // namespace

TEST_CASE("registry summary has one bounded line per capability") {
  auto summary = summarize_registry(fixture());
  CHECK(std::count(summary.begin(), summary.end(), '\n') == static_cast<long>(fixture().entries.size()));
  std::istringstream lines(summary);
  std::string line;
  while (std::getline(lines, line)) CHECK(line.size() <= kSummaryLineLimit);
  CHECK(summarize_registry(Registry{}).empty());

  TempDir dir;
  write_registry(dir.path(), {"a", "b", "c"}, {capability("x.two", {"a"}, {"b", "c"})});
  auto two = summarize_registry(load_registry(dir.path()));
  CHECK(two.find("-> b, c]") != std::string::npos);
}

TEST_CASE("keyword rules map the case-study questions") {
  auto cs1 = deterministic("Identify the impact at a country level due to SeaMeWe-5 cable failure");
  CHECK(cs1.goal_kind == "impact_table");
  CHECK(cs1.subject.entity_type == SubjectType::kCable);
  CHECK(cs1.subject.identifiers == std::vector<std::string>{"SeaMeWe-5"});
  CHECK(cs1.aggregation == Aggregation::kCountry);

  auto cs2 = deterministic(
      "Identify the impact of severe earthquakes and hurricanes globally assuming a 10% infra failure probability");
  CHECK(cs2.subject.entity_type == SubjectType::kHazardEvent);
  CHECK(cs2.subject.identifiers == std::vector<std::string>{"earthquake", "hurricane"});
  CHECK(cs2.parameters.at("failure_probability") == "1/10");

  auto cs3 = deterministic("Analyze the cascading effects of submarine cable failures between Europe and Asia");
  CHECK(cs3.goal_kind == "cascade_timeline");
  CHECK(cs3.subject.identifiers == std::vector<std::string>{"Europe", "Asia"});
  REQUIRE(cs3.time_window.has_value());
  CHECK(cs3.time_window->end == kFixtureReferenceTime);

  auto cs4 = deterministic(
      "A sudden increase in latency was observed from European probes to Asian destinations starting three days ago. "
      "Determine if a submarine cable failure caused this, and if so, identify the specific cable.");
  CHECK(cs4.goal_kind == "ranked_cable_table");
  CHECK(cs4.subject.identifiers == std::vector<std::string>{"Europe", "Asia"});
  REQUIRE(cs4.time_window.has_value());
  CHECK(format_iso8601(cs4.time_window->start) == "2024-03-05T00:00:00Z");

  CHECK_THROWS_AS(deterministic("What is the weather like?"), Error);
  CHECK(deterministic(kValidIntent).subject.identifiers == std::vector<std::string>{"C1"});
}

TEST_CASE("repair loop succeeds below the attempt limit") {
  for (int attempts = 1; attempts <= 4; ++attempts) {
    for (int malformed = 0; malformed <= attempts; ++malformed) {
      std::vector<std::string> responses(malformed, "{\"goal_kind\": 3}");
      responses.push_back(kValidIntent);
      auto transport = std::make_shared<ScriptedTransport>(responses);
      auto backend = make_backend(scripted_config(attempts), transport);
      INFO("attempts=" << attempts << " malformed=" << malformed);
      if (malformed < attempts) {
        auto intent = backend->propose_intent("q", "", vocabulary());
        CHECK(intent.goal_kind == "impact_table");
        CHECK(backend->last_repairs() == malformed);
        CHECK(transport->requests().size() == static_cast<std::size_t>(malformed + 1));
      } else {
        try {
          backend->propose_intent("q", "", vocabulary());
          FAIL("expected IntentError");
        } catch (const Error& e) {
          CHECK(e.code() == ErrorCode::kIntentError);
          CHECK(e.details().size() >= static_cast<std::size_t>(attempts));
        }
        CHECK(transport->requests().size() == static_cast<std::size_t>(attempts));
      }
    }
  }
}

TEST_CASE("repair requests carry the original and the validator errors") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::string>{"not json", kValidIntent});
  auto backend = make_backend(scripted_config(3), transport);
  backend->propose_intent("Identify the impact", "", vocabulary());
  auto second = transport->requests().at(1);
  auto messages = second["messages"];
  REQUIRE(messages.size() == 4);
  CHECK(messages[1]["content"] == "Identify the impact");
  CHECK(messages[2]["content"] == "not json");
  CHECK(messages[3]["content"].get<std::string>().find("not valid JSON") != std::string::npos);
  CHECK(second["temperature"] == 0);
  CHECK(second.contains("response_format"));
}

TEST_CASE("transport errors stay distinct from intent errors") {
  set_network_enabled(false);
  BackendConfig c;
  c.kind = BackendKind::kLlm;
  c.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  auto backend = make_backend(c);
  try {
    backend->propose_intent("q", "", vocabulary());
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTransportError);
  }
  set_network_enabled(true);
  auto empty = std::make_shared<ScriptedTransport>(std::vector<std::string>{});
  try {
    make_backend(scripted_config(3), empty)->propose_intent("q", "", vocabulary());
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTransportError);
  }
}

TEST_CASE("serialized config names the credential variable but never its value") {
  setenv("ARACHNET_TEST_KEY", "sk-secret-value", 1);
  BackendConfig c;
  c.kind = BackendKind::kLlm;
  c.endpoint = "https://example.invalid/v1";
  c.auth_env = "ARACHNET_TEST_KEY";
  auto text = c.to_json().dump();
  CHECK(text.find("ARACHNET_TEST_KEY") != std::string::npos);
  CHECK(text.find("sk-secret-value") == std::string::npos);
  auto back = backend_config_from_json(c.to_json());
  CHECK(back.auth_env == c.auth_env);
  CHECK(back.endpoint == c.endpoint);

  CHECK_THROWS_AS(backend_config_from_json(Json{{"max_repair_attempts", 0}}), Error);
  CHECK_THROWS_AS(backend_config_from_json(Json{{"kind", "llm"}}), Error);
  CHECK_THROWS_AS(backend_config_from_json(Json{{"temperature", 0.7}}), Error);
  CHECK_THROWS_AS(backend_config_from_json(Json{{"api_key", "x"}}), Error);
}

TEST_CASE("prompt templates resolve every placeholder") {
  PromptTemplate t{"intent", "Q: {query} V: {vocabulary}"};
  CHECK(t.render({{"query", "a"}, {"vocabulary", "b"}}) == "Q: a V: b");
  CHECK_THROWS_AS(t.render({{"query", "a"}}), Error);
  PromptTemplate bad{"intent", "{secret}"};
  CHECK_THROWS_AS(bad.render({{"secret", "x"}}), Error);
  auto shipped = load_prompt(source_dir() / "prompts", "intent");
  CHECK_NOTHROW(shipped.render({{"query", "q"}, {"registry_summary", "s"}, {"vocabulary", "v"}}));
  CHECK_NOTHROW(load_prompt(source_dir() / "prompts", "rationale"));
}
