#pragma once

// Stage 4: mine reusable step chains from successful runs, validate them by
// replay and promote validated composites into a new registry version.

#include "arachnet/executor.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace arachnet {

struct TraceStep {
  std::string step_id;
  std::string capability_id;
  bool is_adapter = false;
  std::map<std::string, Source> bindings;
  std::map<std::string, std::string> params;
  std::map<std::string, std::string> input_digests;   // port -> digest (param inputs omitted)
  std::map<std::string, std::string> output_digests;  // port -> digest
};

struct RunTrace {
  std::string run_id;
  std::string plan_id;
  std::vector<TraceStep> steps;  // plan order
  bool success = false;
};

RunTrace make_trace(const std::string& run_id, const ExecutablePlan& plan, const ExecutionResult& result);
Json to_json(const RunTrace& trace);
RunTrace run_trace_from_json(const Json& doc);

// Where a chain occurred in one run and the digests it read and wrote, keyed
// by the composite's port names.
struct ChainOccurrence {
  std::vector<std::string> step_ids;
  std::map<std::string, std::string> input_digests;
  std::map<std::string, std::string> output_digests;
};

struct CompositePattern {
  std::vector<std::string> chain;
  CompositeDefinition definition;
  std::map<std::string, std::string> params;  // member parameters, merged
  int support = 0;
  std::map<std::string, ChainOccurrence> occurrences;  // run id -> first occurrence
  CapabilityEntry proposed_entry;

  // Canonical identity: chain, wiring and parameters.
  std::string key() const;
};

Json to_json(const CompositePattern& pattern);

constexpr int kDefaultMinSupport = 3;
constexpr int kDefaultMinChainLength = 2;

// Maximal contiguous chains of manual capabilities, wired identically, found in
// at least min_support successful traces. Sorted by (support desc, chain).
// Chains already registered as composites are left out.
std::vector<CompositePattern> mine_patterns(const std::vector<RunTrace>& traces, const Registry& registry,
                                            int min_support = kDefaultMinSupport,
                                            int min_len = kDefaultMinChainLength);

// "curated.<token>_<token>..._v1"; each token is the first word of a member's
// function name, cut to three letters when longer than six.
std::string composite_id(const std::vector<std::string>& chain, const Registry& registry);

// Runs composite capabilities by invoking their members on base adapters.
class CompositeAdapter final : public ToolAdapter {
 public:
  CompositeAdapter(RegistryPtr registry, AdapterSet base);

  bool supports(const std::string& capability_id) const override;
  std::vector<std::string> supported_ids() const override;
  PortValues invoke(const std::string& capability_id, const PortValues& inputs, const Params& params) const override;

 private:
  RegistryPtr registry_;
  AdapterSet base_;
};

struct ReplayRecord {
  std::string run_id;
  std::string port;
  std::string recorded;
  std::string replayed;
  bool match() const { return recorded == replayed; }
};

struct ReplayVerdict {
  std::string pattern_key;
  bool passed = false;
  std::vector<ReplayRecord> replays;
  std::string reason;
};

Json to_json(const ReplayVerdict& verdict);

constexpr int kMinReplayRuns = 2;

// Replays the proposed composite as a one-step plan on the recorded inputs of
// every supporting run whose blobs are available. Errors: ReplayError when
// fewer than two runs can be replayed.
ReplayVerdict validate_composite(const CompositePattern& pattern, const std::map<std::string, const BlobStore*>& blobs,
                                 const Registry& registry, const AdapterSet& base);

// Writes capabilities/curated/<id>.json and docs/registry/<id>.md into a new
// registry version; returns the version number.
// Errors: PreconditionFailed without a passing verdict for this pattern,
// IdCollision when the id is taken.
int promote(const CompositePattern& pattern, const ReplayVerdict& verdict, RegistryStore& store);

std::string composite_doc(const CapabilityEntry& entry);

}  // namespace arachnet
