#pragma once

#include "arachnet/rational.hpp"
#include "arachnet/util.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace arachnet {

enum class DataFormat { kTable, kSeries, kScalar, kGraph };

std::string_view to_string(DataFormat format);
DataFormat parse_data_format(std::string_view text);

// Semantic data category used for port compatibility.
struct DataKindSpec {
  std::string kind;
  DataFormat format = DataFormat::kTable;
  std::string unit;  // empty when unitless

  auto operator<=>(const DataKindSpec&) const = default;
  std::string label() const;  // kind/format[/unit]
};

struct PortSpec {
  std::string name;
  DataKindSpec data;
  bool required = true;
};

enum class ConstraintKind { kDataAvailability, kTemporalCoverage, kGeographicScope, kComputeCost, kRateLimit };

std::string_view to_string(ConstraintKind kind);

struct Constraint {
  ConstraintKind kind = ConstraintKind::kDataAvailability;
  std::map<std::string, std::string> params;
};

enum class Provenance { kManual, kCurated };

// Internal wiring of a curated composite: the chain of member capabilities and
// how each member's inputs are fed (from an earlier member or from a
// composite-level input port).
struct CompositeBinding {
  int member = 0;         // consumer index in chain
  std::string port;       // consumer input port
  int source_member = -1; // -1: composite input named `source_port`
  std::string source_port;

  auto operator<=>(const CompositeBinding&) const = default;
};

struct CompositeDefinition {
  std::vector<std::string> chain;
  std::vector<CompositeBinding> bindings;
  // composite output port -> (member index, member output port)
  std::vector<std::pair<std::string, std::pair<int, std::string>>> outputs;
};

struct CapabilityEntry {
  std::string id;
  std::string framework;
  std::string description;
  std::vector<PortSpec> inputs;
  std::vector<PortSpec> outputs;
  std::vector<Constraint> constraints;
  Rational cost_hint = 1;
  Rational reliability = 1;
  Provenance provenance = Provenance::kManual;
  int version = 1;
  // Default step parameters (e.g. detection thresholds); intent parameters
  // override keys declared here and only those.
  std::map<std::string, std::string> parameters;
  std::optional<CompositeDefinition> composite;

  const PortSpec* find_input(std::string_view name) const;
  const PortSpec* find_output(std::string_view name) const;
  std::string function_name() const;  // id without the framework prefix
};

struct Translation {
  DataKindSpec from;
  DataKindSpec to;
  std::string adapter_id;
  Rational cost{1, 2};
  bool lossy = false;
};

class Registry {
 public:
  std::map<std::string, CapabilityEntry> entries;  // sorted by id
  std::vector<Translation> translations;            // sorted by adapter_id
  std::set<DataKindSpec> vocabulary;
  int version = 1;

  const CapabilityEntry* find(std::string_view id) const;
  const Translation* find_translation(std::string_view adapter_id) const;
  bool has_kind(std::string_view kind) const;
  bool declares(const DataKindSpec& spec) const { return vocabulary.count(spec) > 0; }
  // First declared spec (by format, unit order) for a kind token.
  std::optional<DataKindSpec> spec_for_kind(std::string_view kind) const;
};

using RegistryPtr = std::shared_ptr<const Registry>;

// Loads vocabulary.json, translations.json and capabilities/**.json.
// Errors: DuplicateId, UnknownKind, SchemaViolation, each naming file + field.
Registry load_registry(const std::filesystem::path& directory);

// Every capability with an output port of `kind` (token), sorted by id.
std::vector<const CapabilityEntry*> find_producers(const Registry& registry, std::string_view kind);

struct Direct {};
struct ViaAdapters {
  std::vector<Translation> path;
  Rational total_cost;
};
struct Incompatible {};
using CompatibilityResult = std::variant<Direct, ViaAdapters, Incompatible>;

// Cheapest translation path from `out` to `in` (Dijkstra over the translation
// graph; ties broken by the lexicographically smallest adapter-id sequence).
CompatibilityResult check_compatibility(const PortSpec& out, const PortSpec& in, const Registry& registry);
CompatibilityResult check_compatibility(const DataKindSpec& from, const DataKindSpec& to,
                                        const Registry& registry);

Json to_json(const DataKindSpec& spec);
DataKindSpec data_kind_from_json(const Json& doc);
Json to_json(const PortSpec& port, bool is_input);
Json to_json(const CapabilityEntry& entry);
CapabilityEntry capability_from_json(const Json& doc, const std::string& source);
Json to_json(const Translation& translation);
Json to_json(const Constraint& constraint);
Constraint constraint_from_json(const Json& doc, const std::string& where);

// Versioned on-disk registry: <root>/v<N>/ holds a complete registry
// directory; prior versions are never modified. Writers are serialized.
class RegistryStore {
 public:
  explicit RegistryStore(std::filesystem::path root);

  // Creates v1 as a copy of `seed` when the store is empty.
  void initialize_from(const std::filesystem::path& seed);

  int latest_version() const;
  std::filesystem::path version_dir(int version) const;
  RegistryPtr load(int version) const;
  RegistryPtr load_latest() const { return load(latest_version()); }

  // Copies the latest version to latest+1, lets `mutate` add files to the new
  // directory, validates it by loading, and returns the new version number.
  // On any failure the new directory is removed.
  int commit_new_version(const std::function<void(const std::filesystem::path&)>& mutate);

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex write_mutex_;
};

}  // namespace arachnet
