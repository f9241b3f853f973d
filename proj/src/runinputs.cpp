#include "arachnet/runinputs.hpp"

#include "arachnet/error.hpp"

#include <algorithm>

namespace arachnet {

std::map<std::string, DataValue> materialize_run_inputs(const QueryIntent& intent, const Registry& registry,
                                                        const toolsim::FixtureDataset& dataset) {
  std::map<std::string, DataValue> out;
  for (const auto& [name, spec] : run_inputs_for(intent, registry)) {
    DataValue v;
    v.data = spec;
    v.provenance = "run_input:" + name;
    if (name == "cables") {
      v.payload = Json::array();
      for (const auto& id : intent.subject.identifiers) {
        const auto* cable = dataset.find_cable(id);
        if (!cable) throw Error(ErrorCode::kUnknownCable, "unknown cable '" + id + "'");
        v.payload.push_back({{"cable_id", cable->cable_id}});
      }
    } else if (name == "hazards") {
      std::vector<toolsim::HazardEvent> events;
      for (const auto& e : dataset.hazard_events) {
        const auto& ids = intent.subject.identifiers;
        if (ids.empty() || std::find(ids.begin(), ids.end(), e.type) != ids.end() ||
            std::find(ids.begin(), ids.end(), e.event_id) != ids.end())
          events.push_back(e);
      }
      v.payload = toolsim::hazards_to_payload(events);
    } else if (name == "regions") {
      const auto& ids = intent.subject.identifiers;
      if (ids.size() != 2) throw Error(ErrorCode::kSchemaViolation, "region pair needs exactly two regions");
      v.payload = Json::array({{{"from_region", ids[0]}, {"to_region", ids[1]}}});
    } else if (name == "window") {
      v.payload = toolsim::window_to_payload(*intent.time_window);
    }
    out[name] = v;
  }
  return out;
}

}  // namespace arachnet
