#pragma once

// Deterministic simulated measurement tools over the minitopo fixture
// dataset. Every function here is pure: same inputs, byte-identical outputs.

#include "arachnet/data.hpp"
#include "arachnet/rational.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace arachnet::toolsim {

struct Cable {
  std::string cable_id;
  std::string name;
  std::vector<std::string> landing_countries;
};

struct IpLink {
  std::string link_id;
  std::string cable_id;
  std::string ip_a;
  std::string ip_b;

  auto operator<=>(const IpLink&) const = default;
};

struct GeoRecord {
  std::string ip;
  std::string country;
  int asn = 0;
};

struct AsNode {
  int asn = 0;
  std::string name;
  std::string country;
  std::vector<std::string> links;  // IP links with an endpoint owned by this AS
};

struct AsGraph {
  std::vector<AsNode> nodes;                // sorted by asn
  std::vector<std::pair<int, int>> edges;   // (dependent, upstream)
};

struct BgpEvent {
  std::int64_t timestamp = 0;
  std::string prefix;
  std::vector<int> old_path;
  std::vector<int> new_path;
};

struct Traceroute {
  std::string probe_region;
  std::string dest_region;
  std::int64_t timestamp = 0;
  std::vector<std::string> path;
  Rational rtt_ms;
};

struct HazardEvent {
  std::string event_id;
  std::string type;  // earthquake | hurricane
  std::vector<std::string> affected_cables;
  Rational magnitude;
};

using arachnet::TimeWindow;

class FixtureDataset {
 public:
  static FixtureDataset load(const std::filesystem::path& directory);

  std::vector<Cable> cables;                    // sorted by cable_id
  std::vector<IpLink> ip_links;                 // sorted by link_id
  std::map<std::string, GeoRecord> geoip;       // by ip
  std::map<std::string, std::string> regions;   // country -> region
  std::vector<AsNode> as_nodes;
  std::vector<std::pair<int, int>> as_edges;
  std::vector<BgpEvent> bgp_events;             // sorted by timestamp
  std::vector<Traceroute> traceroutes;          // sorted by timestamp, then file order
  std::vector<HazardEvent> hazard_events;

  const Cable* find_cable(std::string_view id_or_name) const;
};

// --- impact tables ----------------------------------------------------------

struct ImpactRow {
  std::string key;
  std::optional<int> affected;
  std::optional<int> total;
  Rational impact;
};

struct ImpactTable {
  std::string key_column = "country";  // "country" or "cable"
  std::vector<ImpactRow> rows;          // sorted by key
};

struct CountryRow {
  std::string ip;
  std::string country;
};

struct AnomalyReport {
  std::int64_t onset = 0;
  Rational magnitude;
  Rational baseline_median;
  Rational threshold;
  std::string source;
};

struct CableScore {
  std::string cable_id;
  Rational path_share;     // P(c)
  Rational timing_factor;  // T(c)
  Rational score;
};

struct TimelineRow {
  int round = 0;
  std::string layer;  // cable | ip_link | as | evidence
  std::vector<std::string> entities;
};

using LatencySeries = std::vector<std::pair<std::int64_t, Rational>>;

// Errors: UnknownCable.
std::vector<IpLink> cable_dependency_lookup(const FixtureDataset& ds, const std::set<std::string>& cable_ids);
std::set<std::string> ip_extract(const std::vector<IpLink>& links);
// Errors: UncoveredIp.
std::vector<CountryRow> geolocate(const FixtureDataset& ds, const std::set<std::string>& ips);
// Per country: distinct affected IPs / all geolocated IPs of that country.
ImpactTable impact_aggregate(const FixtureDataset& ds, const std::vector<CountryRow>& countries);
ImpactTable impact_combine(const ImpactTable& left, const ImpactTable& right);
// Per link-bearing cable in `links`: affected links / all links of the cable.
ImpactTable cable_impact(const FixtureDataset& ds, const std::vector<IpLink>& links);
std::set<std::string> cables_between(const FixtureDataset& ds, const std::string& region_a, const std::string& region_b);

// Expected impact per country = p x impact of each event's cables, summed
// over events. `type_filter` empty means every event. Errors: BadProbability.
ImpactTable hazard_event_process(const FixtureDataset& ds, const std::vector<HazardEvent>& events,
                                 const Rational& failure_probability, const std::string& type_filter = "");

constexpr const char* kRobustZThreshold = "3.0";
constexpr std::int64_t kCorrelationWindowSeconds = 3600;
// 1.4826 scales MAD to a standard-deviation estimate under normality.
Rational mad_scale();

// Errors: InsufficientBaseline (< 8 baseline points or bad window).
std::optional<AnomalyReport> anomaly_detect(const LatencySeries& series, const TimeWindow& baseline,
                                            const Rational& z_threshold = parse_rational(kRobustZThreshold));

LatencySeries latency_extract(const std::vector<Traceroute>& traces);

// Errors: NoAnomaly.
std::vector<CableScore> suspect_cable_rank(const FixtureDataset& ds, const std::optional<AnomalyReport>& anomaly,
                                           const std::vector<Traceroute>& traces, const std::vector<IpLink>& links,
                                           const std::vector<BgpEvent>& bgp_events, const TimeWindow& window,
                                           std::int64_t delta_seconds = kCorrelationWindowSeconds,
                                           const Rational& uncorrelated_factor = Rational(1, 4));

AsGraph as_dependencies(const FixtureDataset& ds);

// Rounds over AS dependencies; round 0 lists failed cables and their links.
// Errors: BadProbability when threshold is outside (0,1].
std::vector<TimelineRow> cascade_propagate(const FixtureDataset& ds, const ImpactTable& impact, const AsGraph& graph,
                                           const Rational& threshold);

std::vector<BgpEvent> route_changes(const FixtureDataset& ds, const TimeWindow& window);
// First change inside the window removing >= min_removed AS adjacencies.
std::optional<AnomalyReport> routing_anomaly(const std::vector<BgpEvent>& events, const TimeWindow& window,
                                             int min_removed_adjacencies);

std::vector<TimelineRow> cascade_synthesis(const std::vector<TimelineRow>& timeline,
                                           const std::optional<AnomalyReport>& routing,
                                           const std::optional<AnomalyReport>& latency);

std::vector<Traceroute> traceroute_fetch(const FixtureDataset& ds, const std::string& probe_region,
                                         const std::string& dest_region, const TimeWindow& window,
                                         std::int64_t lookback_seconds);

// --- payload codecs ---------------------------------------------------------

Json impact_to_payload(const ImpactTable& table);
ImpactTable impact_from_payload(const Json& payload);
Json links_to_payload(const std::vector<IpLink>& links);
std::vector<IpLink> links_from_payload(const Json& payload);
Json anomaly_to_payload(const std::optional<AnomalyReport>& report);
std::optional<AnomalyReport> anomaly_from_payload(const Json& payload);
Json timeline_to_payload(const std::vector<TimelineRow>& rows);
std::vector<TimelineRow> timeline_from_payload(const Json& payload);
Json traces_to_payload(const std::vector<Traceroute>& traces);
std::vector<Traceroute> traces_from_payload(const Json& payload);
Json bgp_to_payload(const std::vector<BgpEvent>& events);
std::vector<BgpEvent> bgp_from_payload(const Json& payload);
Json hazards_to_payload(const std::vector<HazardEvent>& events);
std::vector<HazardEvent> hazards_from_payload(const Json& payload);
Json series_to_payload(const LatencySeries& series);
LatencySeries series_from_payload(const Json& payload);
Json graph_to_payload(const AsGraph& graph);
AsGraph graph_from_payload(const Json& payload);
TimeWindow window_from_payload(const Json& payload);
Json window_to_payload(const TimeWindow& window);

// Adapter exposing every fixture capability and translation adapter.
class ToolSimAdapter final : public ToolAdapter {
 public:
  explicit ToolSimAdapter(std::shared_ptr<const FixtureDataset> dataset);

  bool supports(const std::string& capability_id) const override;
  std::vector<std::string> supported_ids() const override;
  PortValues invoke(const std::string& capability_id, const PortValues& inputs, const Params& params) const override;

  const FixtureDataset& dataset() const { return *dataset_; }

 private:
  std::shared_ptr<const FixtureDataset> dataset_;
};

}  // namespace arachnet::toolsim
