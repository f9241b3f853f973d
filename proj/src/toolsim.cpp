#include "arachnet/toolsim.hpp"

#include "arachnet/error.hpp"

#include <algorithm>
#include <deque>

namespace arachnet::toolsim {

namespace {

std::vector<std::string> string_list(const Json& doc) {
  std::vector<std::string> out;
  for (const auto& v : doc) out.push_back(v.get<std::string>());
  return out;
}

std::vector<int> int_list(const Json& doc) {
  std::vector<int> out;
  for (const auto& v : doc) out.push_back(v.get<int>());
  return out;
}

Rational median(std::vector<Rational> values) {
  std::sort(values.begin(), values.end());
  auto n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2;
}

std::set<std::pair<int, int>> adjacencies(const std::vector<int>& path) {
  std::set<std::pair<int, int>> out;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    out.emplace(std::min(path[i], path[i + 1]), std::max(path[i], path[i + 1]));
  }
  return out;
}

const Json& table_payload(const PortValues& inputs, const std::string& port) {
  auto it = inputs.find(port);
  if (it == inputs.end()) throw Error(ErrorCode::kMissingRunInput, "input port '" + port + "' is not bound");
  return it->second.payload;
}

std::string param_or(const Params& params, const std::string& key, const std::string& fallback) {
  auto it = params.find(key);
  return it == params.end() || it->second.empty() ? fallback : it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

FixtureDataset FixtureDataset::load(const std::filesystem::path& dir) {
  FixtureDataset ds;
  try {
    for (const auto& c : read_json_file(dir / "cables.json"))
      ds.cables.push_back({c.at("cable_id"), c.at("name"), string_list(c.at("landing_countries"))});
    for (const auto& l : read_json_file(dir / "ip_links.json"))
      ds.ip_links.push_back({l.at("link_id"), l.at("cable_id"), l.at("ip_a"), l.at("ip_b")});
    for (const auto& g : read_json_file(dir / "geoip.json"))
      ds.geoip[g.at("ip")] = {g.at("ip"), g.at("country"), g.at("asn").get<int>()};
    for (const auto& c : read_json_file(dir / "countries.json")) ds.regions[c.at("country")] = c.at("region");
    auto deps = read_json_file(dir / "as_deps.json");
    for (const auto& n : deps.at("nodes")) ds.as_nodes.push_back({n.at("asn").get<int>(), n.at("name"), n.at("country"), {}});
    for (const auto& e : deps.at("edges")) ds.as_edges.push_back({e.at("from").get<int>(), e.at("to").get<int>()});
    for (const auto& b : read_json_file(dir / "bgp_events.json"))
      ds.bgp_events.push_back({parse_iso8601(b.at("timestamp").get<std::string>()), b.at("prefix"),
                               int_list(b.at("old_path")), int_list(b.at("new_path"))});
    for (const auto& t : read_json_file(dir / "traceroutes.json"))
      ds.traceroutes.push_back({t.at("probe_region"), t.at("dest_region"),
                                parse_iso8601(t.at("timestamp").get<std::string>()), string_list(t.at("path")),
                                rational_from_json(t.at("rtt_ms"))});
    for (const auto& h : read_json_file(dir / "hazard_events.json"))
      ds.hazard_events.push_back({h.at("event_id"), h.at("type"), string_list(h.at("affected_cables")),
                                  rational_from_json(h.at("magnitude"))});
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, "fixture dataset " + dir.string() + ": " + e.what());
  }
  std::sort(ds.cables.begin(), ds.cables.end(), [](auto& a, auto& b) { return a.cable_id < b.cable_id; });
  std::sort(ds.ip_links.begin(), ds.ip_links.end(), [](auto& a, auto& b) { return a.link_id < b.link_id; });
  std::stable_sort(ds.bgp_events.begin(), ds.bgp_events.end(),
                   [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
  std::stable_sort(ds.traceroutes.begin(), ds.traceroutes.end(),
                   [](auto& a, auto& b) { return a.timestamp < b.timestamp; });

  // Foreign keys: links reference cables; geoip covers link and path IPs.
  std::vector<std::string> problems;
  for (const auto& l : ds.ip_links) {
    if (!ds.find_cable(l.cable_id)) problems.push_back(l.link_id + " references unknown cable " + l.cable_id);
    for (const auto& ip : {l.ip_a, l.ip_b})
      if (!ds.geoip.count(ip)) problems.push_back("geoip does not cover " + ip);
  }
  for (const auto& t : ds.traceroutes)
    for (const auto& ip : t.path)
      if (!ds.geoip.count(ip)) problems.push_back("geoip does not cover traceroute hop " + ip);
  if (!problems.empty())
    throw Error(ErrorCode::kSchemaViolation, "fixture dataset foreign keys do not resolve", problems);

  for (auto& node : ds.as_nodes) {
    for (const auto& l : ds.ip_links) {
      if (ds.geoip.at(l.ip_a).asn == node.asn || ds.geoip.at(l.ip_b).asn == node.asn) node.links.push_back(l.link_id);
    }
  }
  std::sort(ds.as_nodes.begin(), ds.as_nodes.end(), [](auto& a, auto& b) { return a.asn < b.asn; });
  return ds;
}

const Cable* FixtureDataset::find_cable(std::string_view id_or_name) const {
  for (const auto& c : cables)
    if (c.cable_id == id_or_name || c.name == id_or_name) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Operations

std::vector<IpLink> cable_dependency_lookup(const FixtureDataset& ds, const std::set<std::string>& cable_ids) {
  for (const auto& id : cable_ids) {
    if (!std::any_of(ds.cables.begin(), ds.cables.end(), [&](const Cable& c) { return c.cable_id == id; }))
      throw Error(ErrorCode::kUnknownCable, "cable '" + id + "' is not in the fixture dataset");
  }
  std::vector<IpLink> out;
  for (const auto& l : ds.ip_links)
    if (cable_ids.count(l.cable_id)) out.push_back(l);
  return out;
}

std::set<std::string> ip_extract(const std::vector<IpLink>& links) {
  std::set<std::string> ips;
  for (const auto& l : links) {
    ips.insert(l.ip_a);
    ips.insert(l.ip_b);
  }
  return ips;
}

std::vector<CountryRow> geolocate(const FixtureDataset& ds, const std::set<std::string>& ips) {
  std::vector<CountryRow> out;
  for (const auto& ip : ips) {
    auto it = ds.geoip.find(ip);
    if (it == ds.geoip.end()) throw Error(ErrorCode::kUncoveredIp, "no geolocation for " + ip);
    out.push_back({ip, it->second.country});
  }
  return out;
}

ImpactTable impact_aggregate(const FixtureDataset& ds, const std::vector<CountryRow>& countries) {
  std::map<std::string, std::set<std::string>> affected;
  for (const auto& row : countries) affected[row.country].insert(row.ip);
  std::map<std::string, int> footprint;
  for (const auto& [ip, rec] : ds.geoip) ++footprint[rec.country];
  ImpactTable table;
  for (const auto& [country, ips] : affected) {
    int total = footprint[country];
    int hit = static_cast<int>(ips.size());
    // Rows for IPs outside the fixture footprint are clamped to the affected count.
    if (total < hit) total = hit;
    table.rows.push_back({country, hit, total, Rational(hit, total)});
  }
  return table;
}

ImpactTable impact_combine(const ImpactTable& left, const ImpactTable& right) {
  std::map<std::string, Rational> sum;
  for (const auto& r : left.rows) sum[r.key] += r.impact;
  for (const auto& r : right.rows) sum[r.key] += r.impact;
  ImpactTable out;
  out.key_column = left.rows.empty() ? right.key_column : left.key_column;
  for (const auto& [key, value] : sum) out.rows.push_back({key, std::nullopt, std::nullopt, value});
  return out;
}

ImpactTable cable_impact(const FixtureDataset& ds, const std::vector<IpLink>& links) {
  std::map<std::string, std::set<std::string>> hit;
  for (const auto& l : links) hit[l.cable_id].insert(l.link_id);
  ImpactTable out;
  out.key_column = "cable";
  for (const auto& [cable, ids] : hit) {
    int total = static_cast<int>(std::count_if(ds.ip_links.begin(), ds.ip_links.end(),
                                               [&](const IpLink& l) { return l.cable_id == cable; }));
    if (total == 0) throw Error(ErrorCode::kUnknownCable, "cable '" + cable + "' has no fixture links");
    int n = static_cast<int>(ids.size());
    out.rows.push_back({cable, n, total, Rational(n, total)});
  }
  return out;
}

std::set<std::string> cables_between(const FixtureDataset& ds, const std::string& region_a, const std::string& region_b) {
  std::set<std::string> out;
  for (const auto& c : ds.cables) {
    bool a = false, b = false;
    for (const auto& country : c.landing_countries) {
      auto it = ds.regions.find(country);
      if (it == ds.regions.end()) continue;
      a = a || it->second == region_a;
      b = b || it->second == region_b;
    }
    if (a && b) out.insert(c.cable_id);
  }
  return out;
}

ImpactTable hazard_event_process(const FixtureDataset& ds, const std::vector<HazardEvent>& events,
                                 const Rational& failure_probability, const std::string& type_filter) {
  if (failure_probability < 0 || failure_probability > 1)
    throw Error(ErrorCode::kBadProbability, "failure probability " + to_string(failure_probability) + " not in [0,1]");
  std::map<std::string, Rational> expected;
  for (const auto& e : events) {
    if (!type_filter.empty() && e.type != type_filter) continue;
    std::set<std::string> cables(e.affected_cables.begin(), e.affected_cables.end());
    auto per_event = impact_aggregate(ds, geolocate(ds, ip_extract(cable_dependency_lookup(ds, cables))));
    for (const auto& row : per_event.rows) expected[row.key] += failure_probability * row.impact;
  }
  ImpactTable out;
  for (const auto& [country, value] : expected) out.rows.push_back({country, std::nullopt, std::nullopt, value});
  return out;
}

Rational mad_scale() { return Rational(14826, 10000); }

std::optional<AnomalyReport> anomaly_detect(const LatencySeries& series, const TimeWindow& baseline,
                                            const Rational& z_threshold) {
  if (baseline.end <= baseline.start)
    throw Error(ErrorCode::kInsufficientBaseline, "baseline window is empty");
  std::vector<Rational> base;
  for (const auto& [t, v] : series)
    if (t >= baseline.start && t < baseline.end) base.push_back(v);
  if (base.size() < 8)
    throw Error(ErrorCode::kInsufficientBaseline,
                "baseline has " + std::to_string(base.size()) + " points; at least 8 are required");
  Rational med = median(base);
  std::vector<Rational> deviations;
  for (const auto& v : base) deviations.push_back(v >= med ? Rational(v - med) : Rational(med - v));
  Rational threshold = med + z_threshold * mad_scale() * median(deviations);

  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].first < baseline.end) continue;
    std::vector<Rational> window{series[i].second};
    if (i > 0) window.push_back(series[i - 1].second);
    if (i + 1 < series.size()) window.push_back(series[i + 1].second);
    Rational filtered = median(window);
    if (filtered > threshold) return AnomalyReport{series[i].first, filtered - med, med, threshold, "latency"};
  }
  return std::nullopt;
}

LatencySeries latency_extract(const std::vector<Traceroute>& traces) {
  std::map<std::int64_t, std::vector<Rational>> by_time;
  for (const auto& t : traces) by_time[t.timestamp].push_back(t.rtt_ms);
  LatencySeries out;
  for (const auto& [t, values] : by_time) out.emplace_back(t, median(values));
  return out;
}

std::vector<CableScore> suspect_cable_rank(const FixtureDataset& ds, const std::optional<AnomalyReport>& anomaly,
                                           const std::vector<Traceroute>& traces, const std::vector<IpLink>& links,
                                           const std::vector<BgpEvent>& bgp_events, const TimeWindow& window,
                                           std::int64_t delta_seconds, const Rational& uncorrelated_factor) {
  if (!anomaly) throw Error(ErrorCode::kNoAnomaly, "suspect ranking requires a detected anomaly");
  std::map<std::string, std::vector<const IpLink*>> by_cable;
  for (const auto& l : links) by_cable[l.cable_id].push_back(&l);

  std::vector<const Traceroute*> anomalous;
  for (const auto& t : traces)
    if (t.timestamp >= anomaly->onset && t.timestamp < window.end) anomalous.push_back(&t);

  auto traverses = [](const Traceroute& t, const IpLink& l) {
    for (std::size_t i = 0; i + 1 < t.path.size(); ++i) {
      if ((t.path[i] == l.ip_a && t.path[i + 1] == l.ip_b) || (t.path[i] == l.ip_b && t.path[i + 1] == l.ip_a))
        return true;
    }
    return false;
  };
  auto asn_of = [&](const std::string& ip) {
    auto it = ds.geoip.find(ip);
    if (it == ds.geoip.end()) throw Error(ErrorCode::kUncoveredIp, "no AS mapping for " + ip);
    return it->second.asn;
  };

  std::vector<std::set<std::pair<int, int>>> removed;
  for (const auto& e : bgp_events) {
    auto delta = e.timestamp - anomaly->onset;
    if (delta < -delta_seconds || delta > delta_seconds) continue;
    auto before = adjacencies(e.old_path);
    auto after = adjacencies(e.new_path);
    std::set<std::pair<int, int>> gone;
    std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::inserter(gone, gone.end()));
    removed.push_back(std::move(gone));
  }

  std::vector<CableScore> out;
  for (const auto& [cable, cable_links] : by_cable) {
    std::size_t hits = 0;
    for (const auto* t : anomalous) {
      if (std::any_of(cable_links.begin(), cable_links.end(), [&](const IpLink* l) { return traverses(*t, *l); }))
        ++hits;
    }
    Rational share = anomalous.empty() ? Rational(0) : Rational(hits, anomalous.size());
    bool correlated = false;
    for (const auto* l : cable_links) {
      int a = asn_of(l->ip_a), b = asn_of(l->ip_b);
      std::pair<int, int> pair{std::min(a, b), std::max(a, b)};
      for (const auto& gone : removed) correlated = correlated || gone.count(pair) > 0;
    }
    Rational timing = correlated ? Rational(1) : uncorrelated_factor;
    out.push_back({cable, share, timing, share * timing});
  }
  std::sort(out.begin(), out.end(), [](const CableScore& a, const CableScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cable_id < b.cable_id;
  });
  return out;
}

AsGraph as_dependencies(const FixtureDataset& ds) {
  AsGraph g;
  g.nodes = ds.as_nodes;
  g.edges = ds.as_edges;
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

std::vector<TimelineRow> cascade_propagate(const FixtureDataset& ds, const ImpactTable& impact, const AsGraph& graph,
                                           const Rational& threshold) {
  if (threshold <= 0 || threshold > 1)
    throw Error(ErrorCode::kBadProbability, "cascade threshold " + to_string(threshold) + " not in (0,1]");
  std::set<std::string> failed_cables;
  if (impact.key_column == "cable") {
    for (const auto& row : impact.rows)
      if (row.impact > 0) failed_cables.insert(row.key);
  }
  if (failed_cables.empty()) return {};

  std::set<std::string> failed_links;
  for (const auto& l : ds.ip_links)
    if (failed_cables.count(l.cable_id)) failed_links.insert(l.link_id);

  std::vector<TimelineRow> timeline;
  timeline.push_back({0, "cable", {failed_cables.begin(), failed_cables.end()}});
  timeline.push_back({0, "ip_link", {failed_links.begin(), failed_links.end()}});

  // Dependencies of an AS: links it owns plus upstream ASes. Track remaining
  // failed-dependency counts incrementally; each round releases the ASes
  // whose failed fraction reached the threshold in the previous round.
  std::map<int, int> dep_total;
  std::map<int, int> dep_failed;
  std::map<int, std::vector<int>> dependents;  // upstream -> dependents
  for (const auto& node : graph.nodes) {
    dep_total[node.asn] += static_cast<int>(node.links.size());
    for (const auto& l : node.links) dep_failed[node.asn] += failed_links.count(l) ? 1 : 0;
  }
  for (const auto& [from, to] : graph.edges) {
    ++dep_total[from];
    dependents[to].push_back(from);
  }
  std::set<int> failed_as;
  auto crosses = [&](int asn) {
    int total = dep_total[asn];
    return total > 0 && Rational(dep_failed[asn], total) >= threshold;
  };
  std::vector<int> frontier;
  for (const auto& node : graph.nodes)
    if (crosses(node.asn)) frontier.push_back(node.asn);
  int round = 1;
  while (!frontier.empty()) {
    std::sort(frontier.begin(), frontier.end());
    TimelineRow row{round, "as", {}};
    for (int asn : frontier) {
      failed_as.insert(asn);
      row.entities.push_back("AS" + std::to_string(asn));
    }
    timeline.push_back(std::move(row));
    std::set<int> next;
    for (int asn : frontier) {
      for (int dependent : dependents[asn]) {
        ++dep_failed[dependent];
        if (!failed_as.count(dependent) && crosses(dependent)) next.insert(dependent);
      }
    }
    frontier.assign(next.begin(), next.end());
    ++round;
  }
  return timeline;
}

std::vector<BgpEvent> route_changes(const FixtureDataset& ds, const TimeWindow& window) {
  std::vector<BgpEvent> out;
  for (const auto& e : ds.bgp_events)
    if (e.timestamp >= window.start && e.timestamp < window.end) out.push_back(e);
  return out;
}

std::optional<AnomalyReport> routing_anomaly(const std::vector<BgpEvent>& events, const TimeWindow& window,
                                             int min_removed_adjacencies) {
  for (const auto& e : events) {
    if (e.timestamp < window.start || e.timestamp >= window.end) continue;
    auto before = adjacencies(e.old_path);
    auto after = adjacencies(e.new_path);
    int removed = 0;
    for (const auto& adj : before) removed += after.count(adj) ? 0 : 1;
    if (removed >= min_removed_adjacencies) return AnomalyReport{e.timestamp, Rational(removed), 0, 0, "routing"};
  }
  return std::nullopt;
}

std::vector<TimelineRow> cascade_synthesis(const std::vector<TimelineRow>& timeline,
                                           const std::optional<AnomalyReport>& routing,
                                           const std::optional<AnomalyReport>& latency) {
  auto out = timeline;
  TimelineRow evidence{0, "evidence", {}};
  if (routing) evidence.entities.push_back("routing_anomaly@" + format_iso8601(routing->onset));
  if (latency) evidence.entities.push_back("latency_anomaly@" + format_iso8601(latency->onset));
  if (!evidence.entities.empty()) out.push_back(std::move(evidence));
  return out;
}

std::vector<Traceroute> traceroute_fetch(const FixtureDataset& ds, const std::string& probe_region,
                                         const std::string& dest_region, const TimeWindow& window,
                                         std::int64_t lookback_seconds) {
  std::vector<Traceroute> out;
  for (const auto& t : ds.traceroutes) {
    if (t.probe_region != probe_region || t.dest_region != dest_region) continue;
    if (t.timestamp >= window.start - lookback_seconds && t.timestamp < window.end) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Payload codecs

Json impact_to_payload(const ImpactTable& table) {
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    Json row{{table.key_column, r.key}, {"impact", to_string(r.impact)}};
    if (r.affected) row["affected"] = *r.affected;
    if (r.total) row["total"] = *r.total;
    rows.push_back(row);
  }
  return rows;
}

ImpactTable impact_from_payload(const Json& payload) {
  ImpactTable t;
  if (!payload.empty()) t.key_column = payload.front().contains("cable") ? "cable" : "country";
  for (const auto& row : payload) {
    ImpactRow r;
    r.key = row.at(t.key_column).get<std::string>();
    r.impact = rational_from_json(row.at("impact"));
    if (row.contains("affected")) r.affected = row["affected"].get<int>();
    if (row.contains("total")) r.total = row["total"].get<int>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

Json links_to_payload(const std::vector<IpLink>& links) {
  Json rows = Json::array();
  for (const auto& l : links)
    rows.push_back({{"link_id", l.link_id}, {"cable_id", l.cable_id}, {"ip_a", l.ip_a}, {"ip_b", l.ip_b}});
  return rows;
}

std::vector<IpLink> links_from_payload(const Json& payload) {
  std::vector<IpLink> out;
  for (const auto& r : payload) out.push_back({r.at("link_id"), r.at("cable_id"), r.at("ip_a"), r.at("ip_b")});
  return out;
}

Json anomaly_to_payload(const std::optional<AnomalyReport>& report) {
  Json rows = Json::array();
  if (report) {
    rows.push_back({{"onset", format_iso8601(report->onset)},
                    {"magnitude", to_string(report->magnitude)},
                    {"baseline_median", to_string(report->baseline_median)},
                    {"threshold", to_string(report->threshold)},
                    {"source", report->source}});
  }
  return rows;
}

std::optional<AnomalyReport> anomaly_from_payload(const Json& payload) {
  if (payload.empty()) return std::nullopt;
  const auto& r = payload.front();
  return AnomalyReport{parse_iso8601(r.at("onset").get<std::string>()), rational_from_json(r.at("magnitude")),
                       rational_from_json(r.at("baseline_median")), rational_from_json(r.at("threshold")),
                       r.at("source")};
}

Json timeline_to_payload(const std::vector<TimelineRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) out.push_back({{"round", r.round}, {"layer", r.layer}, {"entities", r.entities}});
  return out;
}

std::vector<TimelineRow> timeline_from_payload(const Json& payload) {
  std::vector<TimelineRow> out;
  for (const auto& r : payload) out.push_back({r.at("round").get<int>(), r.at("layer"), string_list(r.at("entities"))});
  return out;
}

Json traces_to_payload(const std::vector<Traceroute>& traces) {
  Json out = Json::array();
  for (const auto& t : traces) {
    out.push_back({{"probe_region", t.probe_region},
                   {"dest_region", t.dest_region},
                   {"timestamp", format_iso8601(t.timestamp)},
                   {"path", t.path},
                   {"rtt_ms", to_string(t.rtt_ms)}});
  }
  return out;
}

std::vector<Traceroute> traces_from_payload(const Json& payload) {
  std::vector<Traceroute> out;
  for (const auto& t : payload) {
    out.push_back({t.at("probe_region"), t.at("dest_region"), parse_iso8601(t.at("timestamp").get<std::string>()),
                   string_list(t.at("path")), rational_from_json(t.at("rtt_ms"))});
  }
  return out;
}

Json bgp_to_payload(const std::vector<BgpEvent>& events) {
  Json out = Json::array();
  for (const auto& e : events) {
    out.push_back({{"timestamp", format_iso8601(e.timestamp)},
                   {"prefix", e.prefix},
                   {"old_path", e.old_path},
                   {"new_path", e.new_path}});
  }
  return out;
}

std::vector<BgpEvent> bgp_from_payload(const Json& payload) {
  std::vector<BgpEvent> out;
  for (const auto& e : payload) {
    out.push_back({parse_iso8601(e.at("timestamp").get<std::string>()), e.at("prefix"), int_list(e.at("old_path")),
                   int_list(e.at("new_path"))});
  }
  return out;
}

Json hazards_to_payload(const std::vector<HazardEvent>& events) {
  Json out = Json::array();
  for (const auto& e : events) {
    out.push_back({{"event_id", e.event_id},
                   {"type", e.type},
                   {"affected_cables", e.affected_cables},
                   {"magnitude", to_string(e.magnitude)}});
  }
  return out;
}

std::vector<HazardEvent> hazards_from_payload(const Json& payload) {
  std::vector<HazardEvent> out;
  for (const auto& e : payload) {
    out.push_back({e.at("event_id"), e.at("type"), string_list(e.at("affected_cables")),
                   rational_from_json(e.at("magnitude"))});
  }
  return out;
}

Json series_to_payload(const LatencySeries& series) {
  Json out = Json::array();
  for (const auto& [t, v] : series) out.push_back(Json::array({format_iso8601(t), to_string(v)}));
  return out;
}

LatencySeries series_from_payload(const Json& payload) {
  LatencySeries out;
  for (const auto& p : payload)
    out.emplace_back(parse_iso8601(p.at(0).get<std::string>()), rational_from_json(p.at(1)));
  return out;
}

Json graph_to_payload(const AsGraph& graph) {
  Json nodes = Json::array();
  for (const auto& n : graph.nodes)
    nodes.push_back({{"asn", n.asn}, {"name", n.name}, {"country", n.country}, {"links", n.links}});
  Json edges = Json::array();
  for (const auto& [from, to] : graph.edges) edges.push_back({{"from", from}, {"to", to}});
  return {{"nodes", nodes}, {"edges", edges}};
}

AsGraph graph_from_payload(const Json& payload) {
  AsGraph g;
  for (const auto& n : payload.at("nodes"))
    g.nodes.push_back({n.at("asn").get<int>(), n.at("name"), n.at("country"), string_list(n.at("links"))});
  for (const auto& e : payload.at("edges")) g.edges.emplace_back(e.at("from").get<int>(), e.at("to").get<int>());
  return g;
}

TimeWindow window_from_payload(const Json& payload) {
  if (!payload.is_array() || payload.size() != 1)
    throw Error(ErrorCode::kSchemaViolation, "time_window payload must hold exactly one row");
  return {parse_iso8601(payload[0].at("start").get<std::string>()),
          parse_iso8601(payload[0].at("end").get<std::string>())};
}

Json window_to_payload(const TimeWindow& window) {
  return Json::array({{{"start", format_iso8601(window.start)}, {"end", format_iso8601(window.end)}}});
}

// ---------------------------------------------------------------------------
// Adapter

namespace {

const std::vector<std::string>& capability_ids() {
  static const std::vector<std::string> ids{
      "atlas.anomaly_detect",      "atlas.latency_extract",         "atlas.traceroute_fetch",
      "caida.as_dependencies",     "extract_ips",                   "ioda.hazard_outage_estimate",
      "nautilus.cable_dependency_lookup", "nautilus.cables_between", "nautilus.geolocate",
      "nautilus.impact_aggregate", "nautilus.ip_extract",           "routeviews.route_changes",
      "routeviews.routing_anomaly", "xaminer.cable_impact",         "xaminer.cascade_propagate",
      "xaminer.cascade_synthesis", "xaminer.hazard_event_process",  "xaminer.impact_aggregate",
      "xaminer.impact_combine",    "xaminer.suspect_cable_rank",
  };
  return ids;
}

DataValue make_value(const std::string& kind, DataFormat format, Json payload, const std::string& unit = "") {
  DataValue v;
  v.data = {kind, format, unit};
  v.payload = std::move(payload);
  return v;
}

DataValue impact_value(const ImpactTable& t) {
  return make_value("impact_table", DataFormat::kTable, impact_to_payload(t), "fraction");
}

std::set<std::string> column_set(const Json& payload, const std::string& column) {
  std::set<std::string> out;
  for (const auto& row : payload) out.insert(row.at(column).get<std::string>());
  return out;
}

}  // namespace

ToolSimAdapter::ToolSimAdapter(std::shared_ptr<const FixtureDataset> dataset) : dataset_(std::move(dataset)) {}

bool ToolSimAdapter::supports(const std::string& id) const {
  const auto& ids = capability_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::vector<std::string> ToolSimAdapter::supported_ids() const { return capability_ids(); }

PortValues ToolSimAdapter::invoke(const std::string& id, const PortValues& in, const Params& params) const {
  const auto& ds = *dataset_;
  try {
    if (id == "nautilus.cables_between") {
      const auto& regions = table_payload(in, "regions");
      if (regions.size() != 1) throw Error(ErrorCode::kSchemaViolation, "region_pair must hold exactly one row");
      auto cables = cables_between(ds, regions[0].at("from_region"), regions[0].at("to_region"));
      Json rows = Json::array();
      for (const auto& c : cables) rows.push_back({{"cable_id", c}});
      return {{"cables", make_value("cable_id_set", DataFormat::kTable, rows)}};
    }
    if (id == "nautilus.cable_dependency_lookup") {
      auto links = cable_dependency_lookup(ds, column_set(table_payload(in, "cables"), "cable_id"));
      return {{"links", make_value("ip_link_set", DataFormat::kTable, links_to_payload(links))}};
    }
    if (id == "nautilus.ip_extract" || id == "extract_ips") {
      const std::string port = id == "extract_ips" ? "in" : "links";
      auto ips = ip_extract(links_from_payload(table_payload(in, port)));
      Json rows = Json::array();
      for (const auto& ip : ips) rows.push_back({{"ip", ip}});
      return {{id == "extract_ips" ? "out" : "ips", make_value("ip_set", DataFormat::kTable, rows)}};
    }
    if (id == "nautilus.geolocate") {
      auto rows = geolocate(ds, column_set(table_payload(in, "ips"), "ip"));
      Json out = Json::array();
      for (const auto& r : rows) out.push_back({{"ip", r.ip}, {"country", r.country}});
      return {{"countries", make_value("country_table", DataFormat::kTable, out)}};
    }
    if (id == "nautilus.impact_aggregate" || id == "xaminer.impact_aggregate") {
      std::vector<CountryRow> rows;
      for (const auto& r : table_payload(in, "countries")) rows.push_back({r.at("ip"), r.at("country")});
      return {{"impact", impact_value(impact_aggregate(ds, rows))}};
    }
    if (id == "xaminer.hazard_event_process" || id == "ioda.hazard_outage_estimate") {
      auto p = parse_rational(param_or(params, "failure_probability", "1"));
      auto events = hazards_from_payload(table_payload(in, "events"));
      return {{"impact", impact_value(hazard_event_process(ds, events, p, param_or(params, "hazard_type", "")))}};
    }
    if (id == "xaminer.impact_combine") {
      auto combined = impact_combine(impact_from_payload(table_payload(in, "left")),
                                     impact_from_payload(table_payload(in, "right")));
      return {{"impact", impact_value(combined)}};
    }
    if (id == "xaminer.cable_impact") {
      return {{"impact", impact_value(cable_impact(ds, links_from_payload(table_payload(in, "links"))))}};
    }
    if (id == "xaminer.cascade_propagate") {
      auto timeline = cascade_propagate(ds, impact_from_payload(table_payload(in, "impact")),
                                        graph_from_payload(table_payload(in, "deps")),
                                        parse_rational(param_or(params, "threshold", "0.5")));
      return {{"timeline", make_value("cascade_timeline", DataFormat::kTable, timeline_to_payload(timeline))}};
    }
    if (id == "xaminer.cascade_synthesis") {
      auto timeline = cascade_synthesis(timeline_from_payload(table_payload(in, "timeline")),
                                        anomaly_from_payload(table_payload(in, "routing")),
                                        anomaly_from_payload(table_payload(in, "latency")));
      return {{"timeline", make_value("cascade_timeline", DataFormat::kTable, timeline_to_payload(timeline))}};
    }
    if (id == "xaminer.suspect_cable_rank") {
      auto scores = suspect_cable_rank(
          ds, anomaly_from_payload(table_payload(in, "anomaly")), traces_from_payload(table_payload(in, "traces")),
          links_from_payload(table_payload(in, "links")), bgp_from_payload(table_payload(in, "changes")),
          window_from_payload(table_payload(in, "window")),
          std::stoll(param_or(params, "correlation_window_s", std::to_string(kCorrelationWindowSeconds))),
          parse_rational(param_or(params, "uncorrelated_factor", "1/4")));
      Json rows = Json::array();
      int rank = 1;
      for (const auto& s : scores) {
        rows.push_back({{"rank", rank++},
                        {"cable_id", s.cable_id},
                        {"path_share", to_string(s.path_share)},
                        {"timing_factor", to_string(s.timing_factor)},
                        {"score", to_string(s.score)}});
      }
      return {{"ranking", make_value("ranked_cable_table", DataFormat::kTable, rows)}};
    }
    if (id == "caida.as_dependencies") {
      return {{"graph", make_value("as_dependency_graph", DataFormat::kGraph, graph_to_payload(as_dependencies(ds)))}};
    }
    if (id == "routeviews.route_changes") {
      auto events = route_changes(ds, window_from_payload(table_payload(in, "window")));
      return {{"changes", make_value("route_change_set", DataFormat::kTable, bgp_to_payload(events))}};
    }
    if (id == "routeviews.routing_anomaly") {
      auto report = routing_anomaly(bgp_from_payload(table_payload(in, "changes")),
                                    window_from_payload(table_payload(in, "window")),
                                    std::stoi(param_or(params, "min_removed_adjacencies", "2")));
      return {{"anomaly", make_value("anomaly_report", DataFormat::kTable, anomaly_to_payload(report))}};
    }
    if (id == "atlas.traceroute_fetch") {
      const auto& regions = table_payload(in, "regions");
      if (regions.size() != 1) throw Error(ErrorCode::kSchemaViolation, "region_pair must hold exactly one row");
      auto traces = traceroute_fetch(ds, regions[0].at("from_region"), regions[0].at("to_region"),
                                     window_from_payload(table_payload(in, "window")),
                                     std::stoll(param_or(params, "lookback_s", "259200")));
      return {{"traces", make_value("traceroute_set", DataFormat::kTable, traces_to_payload(traces))}};
    }
    if (id == "atlas.latency_extract") {
      auto series = latency_extract(traces_from_payload(table_payload(in, "traces")));
      return {{"series", make_value("latency_series", DataFormat::kSeries, series_to_payload(series), "ms")}};
    }
    if (id == "atlas.anomaly_detect") {
      auto window = window_from_payload(table_payload(in, "window"));
      auto span = std::stoll(param_or(params, "baseline_span_s", "259200"));
      auto report = anomaly_detect(series_from_payload(table_payload(in, "series")), {window.start - span, window.start},
                                   parse_rational(param_or(params, "robust_z_threshold", kRobustZThreshold)));
      return {{"anomaly", make_value("anomaly_report", DataFormat::kTable, anomaly_to_payload(report))}};
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, id + ": malformed input payload (" + e.what() + ")");
  }
  throw Error(ErrorCode::kMissingAdapter, "toolsim does not implement '" + id + "'");
}

}  // namespace arachnet::toolsim
