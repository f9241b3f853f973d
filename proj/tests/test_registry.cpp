#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arachnet/error.hpp"
#include "arachnet/registry.hpp"
#include "support.hpp"

#include <algorithm>
#include <functional>

using namespace arachnet;
using namespace testsupport;

namespace {

int count_capability_files(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "capabilities"))
    if (e.path().extension() == ".json") ++n;
  return n;
}

// All simple translation paths from `from` to `to`; returns (cost, ids) minimum.
std::optional<std::pair<Rational, std::vector<std::string>>> brute_force_path(const Registry& reg,
                                                                               const DataKindSpec& from,
                                                                               const DataKindSpec& to) {
  std::optional<std::pair<Rational, std::vector<std::string>>> best;
  std::vector<std::string> ids;
  std::set<DataKindSpec> seen{from};
  std::function<void(const DataKindSpec&, Rational)> dfs = [&](const DataKindSpec& at, Rational cost) {
    if (at == to && !ids.empty()) {
      if (!best || cost < best->first || (cost == best->first && ids < best->second)) best = {cost, ids};
      return;
    }
    for (const auto& t : reg.translations) {
      if (t.from != at || seen.count(t.to)) continue;
      seen.insert(t.to);
      ids.push_back(t.adapter_id);
      dfs(t.to, cost + t.cost);
      ids.pop_back();
      seen.erase(t.to);
    }
  };
  dfs(from, 0);
  return best;
}

}  // namespace

TEST_CASE("fixture registry loads every capability file, sorted") {
  auto reg = load_registry(fixture_registry());
  CHECK(static_cast<int>(reg.entries.size()) == count_capability_files(fixture_registry()));
  std::vector<std::string> ids;
  for (const auto& [id, _] : reg.entries) ids.push_back(id);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  auto again = load_registry(fixture_registry());
  for (const auto& [id, e] : reg.entries) CHECK(to_json(e) == to_json(again.entries.at(id)));
}

TEST_CASE("empty capabilities directory") {
  TempDir tmp;
  write_registry(tmp.path(), {"ip_set"}, {});
  auto reg = load_registry(tmp.path());
  CHECK(reg.entries.empty());
}

TEST_CASE("duplicate id names both files") {
  TempDir tmp;
  write_registry(tmp.path(), {"ip_set", "country_table"}, {capability("nautilus.geolocate", {"ip_set"}, {"country_table"})});
  write_json_file(tmp.path() / "capabilities" / "copy.json", capability("nautilus.geolocate", {"ip_set"}, {"country_table"}));
  try {
    load_registry(tmp.path());
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateId);
    std::string msg = e.what();
    CHECK(msg.find("copy.json") != std::string::npos);
    CHECK(msg.find("nautilus.geolocate.json") != std::string::npos);
  }
}

TEST_CASE("undeclared kind and unknown fields are rejected") {
  TempDir tmp;
  write_registry(tmp.path(), {"ip_set"}, {capability("a.f", {"ip_set"}, {"country_table"})});
  CHECK_THROWS_WITH_AS(load_registry(tmp.path()), doctest::Contains("country_table"), Error);

  TempDir tmp2;
  auto doc = capability("a.f", {"ip_set"}, {"ip_set"});
  doc["surprise"] = 1;
  write_registry(tmp2.path(), {"ip_set"}, {doc});
  try {
    load_registry(tmp2.path());
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchemaViolation);
    CHECK(std::string(e.what()).find("surprise") != std::string::npos);
  }

  TempDir tmp3;
  auto bad = capability("a.f", {"ip_set"}, {"ip_set"});
  bad["constraints"] = Json::array({{{"kind", "weather"}, {"params", Json::object()}}});
  write_registry(tmp3.path(), {"ip_set"}, {bad});
  CHECK_THROWS_AS(load_registry(tmp3.path()), Error);
}

TEST_CASE("zero-cost translation cycles are rejected") {
  TempDir tmp;
  write_registry(tmp.path(), {"a", "b"}, {}, {translation("a", "b", "ab", "0"), translation("b", "a", "ba", "0")});
  CHECK_THROWS_AS(load_registry(tmp.path()), Error);
}

TEST_CASE("find_producers") {
  auto reg = load_registry(fixture_registry());
  auto producers = find_producers(reg, "country_table");
  REQUIRE(producers.size() == 1);
  CHECK(producers[0]->id == "nautilus.geolocate");
  auto impact = find_producers(reg, "impact_table");
  CHECK(impact.size() >= 2);
  CHECK(std::is_sorted(impact.begin(), impact.end(), [](auto* a, auto* b) { return a->id < b->id; }));

  Registry empty;
  CHECK_THROWS_AS(find_producers(empty, "cascade_timeline"), Error);

  // Every entry with outputs is indexed under some kind.
  std::set<std::string> indexed;
  for (const auto& spec : reg.vocabulary)
    for (const auto* e : find_producers(reg, spec.kind)) indexed.insert(e->id);
  for (const auto& [id, e] : reg.entries)
    if (!e.outputs.empty()) CHECK(indexed.count(id));
}

TEST_CASE("check_compatibility over the fixture registry") {
  auto reg = load_registry(fixture_registry());
  auto spec = [&](const char* k) { return *reg.spec_for_kind(k); };
  CHECK(std::holds_alternative<Direct>(check_compatibility(spec("ip_set"), spec("ip_set"), reg)));
  auto via = check_compatibility(spec("ip_link_set"), spec("ip_set"), reg);
  REQUIRE(std::holds_alternative<ViaAdapters>(via));
  CHECK(std::get<ViaAdapters>(via).path.size() == 1);
  CHECK(std::get<ViaAdapters>(via).path[0].adapter_id == "extract_ips");
  CHECK(std::get<ViaAdapters>(via).total_cost == Rational(1, 2));
  CHECK_FALSE(brute_force_path(reg, spec("latency_series"), spec("impact_table")).has_value());
  CHECK(std::holds_alternative<Incompatible>(check_compatibility(spec("latency_series"), spec("impact_table"), reg)));
}

TEST_CASE("compatibility path is the brute-force cheapest on random translation graphs") {
  std::mt19937 rng(7);
  const std::vector<std::string> kinds{"k0", "k1", "k2", "k3", "k4"};
  for (int trial = 0; trial < 300; ++trial) {
    Registry reg;
    for (const auto& k : kinds) reg.vocabulary.insert({k, DataFormat::kTable, ""});
    int n = std::uniform_int_distribution<int>(0, 8)(rng);
    for (int i = 0; i < n; ++i) {
      int a = rng() % kinds.size(), b = rng() % kinds.size();
      if (a == b) continue;
      Translation t;
      t.from = {kinds[a], DataFormat::kTable, ""};
      t.to = {kinds[b], DataFormat::kTable, ""};
      t.adapter_id = "t" + std::to_string(i);
      t.cost = Rational(1 + rng() % 4, 2);
      reg.translations.push_back(t);
    }
    std::sort(reg.translations.begin(), reg.translations.end(),
              [](auto& x, auto& y) { return x.adapter_id < y.adapter_id; });
    for (const auto& from : reg.vocabulary) {
      for (const auto& to : reg.vocabulary) {
        if (from == to) continue;
        auto got = check_compatibility(from, to, reg);
        auto want = brute_force_path(reg, from, to);
        if (!want) {
          CHECK(std::holds_alternative<Incompatible>(got));
          continue;
        }
        REQUIRE(std::holds_alternative<ViaAdapters>(got));
        const auto& via = std::get<ViaAdapters>(got);
        Rational sum = 0;
        std::vector<std::string> ids;
        for (const auto& t : via.path) {
          sum += t.cost;
          ids.push_back(t.adapter_id);
        }
        CHECK(sum == via.total_cost);
        CHECK(via.total_cost == want->first);
        CHECK(ids == want->second);
      }
    }
  }
}

TEST_CASE("registry store versions") {
  TempDir tmp;
  RegistryStore store(tmp.path() / "store");
  store.initialize_from(fixture_registry());
  CHECK(store.latest_version() == 1);
  auto before = store.load_latest()->entries.size();
  int v = store.commit_new_version([](const fs::path& dir) {
    write_json_file(dir / "capabilities" / "extra.json",
                    capability("extra.geolocate", {"ip_set"}, {"country_table"}));
  });
  CHECK(v == 2);
  CHECK(store.load(2)->entries.size() == before + 1);
  CHECK(store.load(1)->entries.size() == before);
  CHECK_THROWS(store.commit_new_version([](const fs::path& dir) {
    write_json_file(dir / "capabilities" / "bad.json", Json::object());
  }));
  CHECK(store.latest_version() == 2);
}
