#pragma once

#include "arachnet/rational.hpp"
#include "arachnet/registry.hpp"
#include "arachnet/util.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace arachnet {

struct TimeWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive

  auto operator<=>(const TimeWindow&) const = default;
};

// The unit that flows between steps. Payload shape by format:
//   table  -> array of objects with homogeneous keys
//   series -> array of [timestamp, number] pairs
//   scalar -> a number (integer or rational string)
//   graph  -> {"nodes": [...], "edges": [...]}
struct DataValue {
  DataKindSpec data;
  Json payload;
  std::string provenance;
  Rational confidence = 1;

  // Content digest over (data, payload); provenance and confidence are
  // excluded so identical content produced by different routes compares equal.
  std::string digest() const;
  Json content() const;  // {data, payload}
};

Json to_json(const DataValue& value);
DataValue data_value_from_json(const Json& doc);

// Shape conformity of a payload for its declared format; returns a reason on failure.
std::optional<std::string> check_payload_shape(const DataKindSpec& spec, const Json& payload);

using PortValues = std::map<std::string, DataValue>;
using Params = std::map<std::string, std::string>;

// Supplies the "how" behind registry capabilities and translation adapters.
// Implementations must be reentrant; fixture adapters are pure functions.
class ToolAdapter {
 public:
  virtual ~ToolAdapter() = default;
  virtual bool supports(const std::string& capability_id) const = 0;
  virtual std::vector<std::string> supported_ids() const = 0;
  // Returns one DataValue per output port; `data` and `payload` must be set.
  virtual PortValues invoke(const std::string& capability_id, const PortValues& inputs, const Params& params) const = 0;
};

// Dispatches to the first adapter supporting an id.
class AdapterSet {
 public:
  AdapterSet() = default;
  explicit AdapterSet(std::vector<std::shared_ptr<const ToolAdapter>> adapters) : adapters_(std::move(adapters)) {}

  void add(std::shared_ptr<const ToolAdapter> adapter) { adapters_.push_back(std::move(adapter)); }
  const ToolAdapter* find(const std::string& capability_id) const;

 private:
  std::vector<std::shared_ptr<const ToolAdapter>> adapters_;
};

}  // namespace arachnet
