#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arachnet/error.hpp"
#include "arachnet/toolsim.hpp"
#include "support.hpp"

#include <algorithm>

using namespace arachnet;
using namespace arachnet::toolsim;
using namespace testsupport;

namespace {

const FixtureDataset& dataset() {
  static const FixtureDataset ds = FixtureDataset::load(fixture_topo());
  return ds;
}

Json raw(const char* name) { return read_json_file(fixture_topo() / name); }

// Independent join over the raw fixture files: cable set -> per-country
// fraction of geolocated IPs hit.
std::map<std::string, Rational> impact_oracle(const std::set<std::string>& cables) {
  std::map<std::string, std::string> country_of;
  std::map<std::string, int> footprint;
  for (const auto& g : raw("geoip.json")) {
    country_of[g["ip"]] = g["country"];
    ++footprint[g["country"]];
  }
  std::map<std::string, std::set<std::string>> hit;
  for (const auto& l : raw("ip_links.json")) {
    if (!cables.count(l["cable_id"])) continue;
    for (const char* side : {"ip_a", "ip_b"}) {
      std::string ip = l[side];
      hit[country_of.at(ip)].insert(ip);
    }
  }
  std::map<std::string, Rational> out;
  for (const auto& [c, ips] : hit) out[c] = Rational(static_cast<int>(ips.size()), footprint[c]);
  return out;
}

std::map<std::string, Rational> as_map(const ImpactTable& t) {
  std::map<std::string, Rational> m;
  for (const auto& r : t.rows) m[r.key] = r.impact;
  return m;
}

ImpactTable c1_impact() {
  return impact_aggregate(dataset(), geolocate(dataset(), ip_extract(cable_dependency_lookup(dataset(), {"C1"}))));
}

}  // namespace

TEST_CASE("fixture foreign keys resolve and sizes stay desk scale") {
  const auto& ds = dataset();
  CHECK(ds.cables.size() <= 5);
  CHECK(ds.ip_links.size() <= 30);
  CHECK(ds.as_nodes.size() <= 15);
  CHECK(ds.find_cable("SeaMeWe-5")->cable_id == "C1");
  CHECK(ds.find_cable("C9") == nullptr);
}

TEST_CASE("cable_dependency_lookup") {
  auto links = cable_dependency_lookup(dataset(), {"C1"});
  int expected = 0;
  for (const auto& l : raw("ip_links.json")) expected += l["cable_id"] == "C1";
  CHECK(static_cast<int>(links.size()) == expected);
  CHECK(std::is_sorted(links.begin(), links.end(), [](auto& a, auto& b) { return a.link_id < b.link_id; }));
  for (const auto& l : links) CHECK(l.cable_id == "C1");
  CHECK(cable_dependency_lookup(dataset(), {}).empty());
  CHECK_THROWS_AS(cable_dependency_lookup(dataset(), {"C9"}), Error);
}

TEST_CASE("geolocate and impact_aggregate match the join oracle") {
  CHECK(as_map(c1_impact()) == impact_oracle({"C1"}));
  for (const auto& r : c1_impact().rows) {
    CHECK(r.impact >= 0);
    CHECK(r.impact <= 1);
  }
  auto one = geolocate(dataset(), {"10.1.1.1"});
  REQUIRE(one.size() == 1);
  CHECK(one[0].country == "FR");
  CHECK(impact_aggregate(dataset(), geolocate(dataset(), {})).rows.empty());
  CHECK_THROWS_AS(geolocate(dataset(), {"203.0.113.9"}), Error);
}

TEST_CASE("hazard processing is linear in the failure probability") {
  const auto& ds = dataset();
  auto base = as_map(hazard_event_process(ds, ds.hazard_events, 1));
  for (auto p : {Rational(0), Rational(1, 10), Rational(3, 7), Rational(1)}) {
    auto scaled = as_map(hazard_event_process(ds, ds.hazard_events, p));
    for (const auto& [c, v] : base) CHECK(scaled.at(c) == p * v);
  }
  // Oracle: sum over events of p x per-event impact.
  std::map<std::string, Rational> oracle;
  for (const auto& e : raw("hazard_events.json")) {
    std::set<std::string> cables;
    for (const auto& c : e["affected_cables"]) cables.insert(c.get<std::string>());
    for (const auto& [c, v] : impact_oracle(cables)) oracle[c] += Rational(1, 10) * v;
  }
  CHECK(as_map(hazard_event_process(ds, ds.hazard_events, Rational(1, 10))) == oracle);
  for (const auto& r : hazard_event_process(ds, ds.hazard_events, 0).rows) CHECK(r.impact == 0);
  CHECK(hazard_event_process(ds, {}, Rational(1, 10)).rows.empty());
  CHECK_THROWS_AS(hazard_event_process(ds, ds.hazard_events, Rational(11, 10)), Error);
}

TEST_CASE("anomaly detection") {
  LatencySeries flat;
  for (int i = 0; i < 20; ++i) flat.emplace_back(i * 3600, 100);
  CHECK_FALSE(anomaly_detect(flat, {0, 10 * 3600}).has_value());
  LatencySeries tiny{{0, 1}, {1, 1}, {2, 1}, {10, 5}};
  CHECK_THROWS_AS(anomaly_detect(tiny, {0, 3}), Error);

  const auto& ds = dataset();
  auto t0 = parse_iso8601("2024-03-05T00:00:00Z");
  TimeWindow window{t0, parse_iso8601("2024-03-08T00:00:00Z")};
  auto traces = traceroute_fetch(ds, "Europe", "Asia", window, 259200);
  auto series = latency_extract(traces);
  auto report = anomaly_detect(series, {window.start - 259200, window.start});
  REQUIRE(report.has_value());
  CHECK(report->onset == t0);

  // Threshold recomputed by hand from the baseline medians.
  std::vector<Rational> base;
  for (const auto& [t, v] : series)
    if (t < t0) base.push_back(v);
  std::sort(base.begin(), base.end());
  Rational med = base.size() % 2 ? base[base.size() / 2] : (base[base.size() / 2 - 1] + base[base.size() / 2]) / 2;
  std::vector<Rational> dev;
  for (auto& v : base) dev.push_back(v > med ? Rational(v - med) : Rational(med - v));
  std::sort(dev.begin(), dev.end());
  Rational mad = dev.size() % 2 ? dev[dev.size() / 2] : (dev[dev.size() / 2 - 1] + dev[dev.size() / 2]) / 2;
  CHECK(report->threshold == med + 3 * Rational(14826, 10000) * mad);
  CHECK(report->baseline_median == med);
}

TEST_CASE("suspect ranking follows the score formula") {
  const auto& ds = dataset();
  auto t0 = parse_iso8601("2024-03-05T00:00:00Z");
  TimeWindow window{t0, parse_iso8601("2024-03-08T00:00:00Z")};
  auto traces = traceroute_fetch(ds, "Europe", "Asia", window, 259200);
  auto report = anomaly_detect(latency_extract(traces), {t0 - 259200, t0});
  auto links = cable_dependency_lookup(ds, cables_between(ds, "Europe", "Asia"));
  auto changes = route_changes(ds, window);
  auto ranking = suspect_cable_rank(ds, report, traces, links, changes, window);
  REQUIRE(!ranking.empty());
  CHECK(ranking[0].cable_id == "C2");
  for (std::size_t i = 1; i < ranking.size(); ++i) CHECK(ranking[0].score > ranking[i].score);
  std::map<std::string, CableScore> by;
  for (auto& s : ranking) by[s.cable_id] = s;
  CHECK(by["C2"].timing_factor == 1);
  CHECK(by["C2"].score == Rational(2, 3));
  CHECK(by["C1"].score == Rational(1, 6));
  CHECK(by["C3"].score == Rational(1, 12));

  // No correlated BGP events: every T is the uncorrelated factor.
  auto uncorrelated = suspect_cable_rank(ds, report, traces, links, {}, window);
  for (auto& s : uncorrelated) CHECK(s.timing_factor == Rational(1, 4));
  CHECK_THROWS_AS(suspect_cable_rank(ds, std::nullopt, traces, links, changes, window), Error);
}

TEST_CASE("cascade propagation") {
  const auto& ds = dataset();
  auto graph = as_dependencies(ds);
  auto links = cable_dependency_lookup(ds, cables_between(ds, "Europe", "Asia"));
  auto impact = cable_impact(ds, links);
  auto timeline = cascade_propagate(ds, impact, graph, Rational(1, 2));
  REQUIRE(timeline.size() >= 2);
  CHECK(timeline[0].layer == "cable");
  CHECK(cascade_propagate(ds, ImpactTable{"cable", {}}, graph, Rational(1, 2)).empty());
  // Only C4 down: no AS loses every dependency.
  auto strict = cascade_propagate(ds, cable_impact(ds, cable_dependency_lookup(ds, {"C4"})), graph, 1);
  CHECK(strict.size() == 2);
  for (const auto& row : strict) CHECK(row.round == 0);
  CHECK_THROWS_AS(cascade_propagate(ds, impact, graph, 0), Error);
}

TEST_CASE("payload codecs round trip") {
  const auto& ds = dataset();
  auto t = c1_impact();
  CHECK(impact_to_payload(impact_from_payload(impact_to_payload(t))) == impact_to_payload(t));
  CHECK(traces_to_payload(traces_from_payload(traces_to_payload(ds.traceroutes))) == traces_to_payload(ds.traceroutes));
  CHECK(graph_to_payload(graph_from_payload(graph_to_payload(as_dependencies(ds)))) ==
        graph_to_payload(as_dependencies(ds)));
}

TEST_CASE("adapter emits declared kinds and is pure") {
  ToolSimAdapter adapter(std::make_shared<FixtureDataset>(dataset()));
  DataValue cables;
  cables.data = {"cable_id_set", DataFormat::kTable, ""};
  cables.payload = Json::array({{{"cable_id", "C1"}}});
  auto out = adapter.invoke("nautilus.cable_dependency_lookup", {{"cables", cables}}, {});
  CHECK(out.at("links").data.kind == "ip_link_set");
  auto again = adapter.invoke("nautilus.cable_dependency_lookup", {{"cables", cables}}, {});
  CHECK(out.at("links").digest() == again.at("links").digest());
  auto ips = adapter.invoke("extract_ips", {{"in", out.at("links")}}, {});
  CHECK(ips.at("out").data.kind == "ip_set");
  CHECK(ips.at("out").payload.size() == ip_extract(cable_dependency_lookup(dataset(), {"C1"})).size());
}
