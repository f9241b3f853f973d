#include "arachnet/data.hpp"

#include "arachnet/error.hpp"

namespace arachnet {

Json DataValue::content() const { return {{"data", to_json(data)}, {"payload", payload}}; }

std::string DataValue::digest() const { return digest_of(content()); }

Json to_json(const DataValue& value) {
  return {{"data", to_json(value.data)},
          {"payload", value.payload},
          {"provenance", value.provenance},
          {"confidence", to_string(value.confidence)}};
}

DataValue data_value_from_json(const Json& doc) {
  DataValue v;
  v.data = data_kind_from_json(doc.at("data"));
  v.payload = doc.at("payload");
  v.provenance = doc.value("provenance", "");
  if (doc.contains("confidence")) v.confidence = rational_from_json(doc.at("confidence"));
  return v;
}

std::optional<std::string> check_payload_shape(const DataKindSpec& spec, const Json& payload) {
  switch (spec.format) {
    case DataFormat::kTable: {
      if (!payload.is_array()) return "table payload must be an array";
      const Json* first = nullptr;
      for (std::size_t i = 0; i < payload.size(); ++i) {
        const auto& row = payload[i];
        if (!row.is_object()) return "table row " + std::to_string(i) + " is not an object";
        if (!first) {
          first = &row;
          continue;
        }
        if (row.size() != first->size()) return "table row " + std::to_string(i) + " has different columns";
        for (const auto& [key, _] : first->items())
          if (!row.contains(key)) return "table row " + std::to_string(i) + " lacks column '" + key + "'";
      }
      return std::nullopt;
    }
    case DataFormat::kSeries: {
      if (!payload.is_array()) return "series payload must be an array";
      for (std::size_t i = 0; i < payload.size(); ++i) {
        const auto& p = payload[i];
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !is_numeric_json(p[1]))
          return "series point " + std::to_string(i) + " is not a [timestamp, number] pair";
      }
      return std::nullopt;
    }
    case DataFormat::kScalar:
      if (!is_numeric_json(payload)) return "scalar payload must be numeric";
      return std::nullopt;
    case DataFormat::kGraph:
      if (!payload.is_object() || !payload.contains("nodes") || !payload.contains("edges") ||
          !payload["nodes"].is_array() || !payload["edges"].is_array())
        return "graph payload must be an object with nodes and edges arrays";
      return std::nullopt;
  }
  return "unknown format";
}

const ToolAdapter* AdapterSet::find(const std::string& capability_id) const {
  for (const auto& a : adapters_)
    if (a->supports(capability_id)) return a.get();
  return nullptr;
}

}  // namespace arachnet
