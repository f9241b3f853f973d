#include "arachnet/registry.hpp"

#include "arachnet/error.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <tuple>

namespace fs = std::filesystem;

namespace arachnet {

std::string_view to_string(DataFormat format) {
  switch (format) {
    case DataFormat::kTable: return "table";
    case DataFormat::kSeries: return "series";
    case DataFormat::kScalar: return "scalar";
    case DataFormat::kGraph: return "graph";
  }
  return "table";
}

DataFormat parse_data_format(std::string_view text) {
  if (text == "table") return DataFormat::kTable;
  if (text == "series") return DataFormat::kSeries;
  if (text == "scalar") return DataFormat::kScalar;
  if (text == "graph") return DataFormat::kGraph;
  throw Error(ErrorCode::kSchemaViolation, "unknown data format '" + std::string(text) + "'");
}

std::string DataKindSpec::label() const {
  std::string out = kind + "/" + std::string(to_string(format));
  if (!unit.empty()) out += "/" + unit;
  return out;
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kDataAvailability: return "data_availability";
    case ConstraintKind::kTemporalCoverage: return "temporal_coverage";
    case ConstraintKind::kGeographicScope: return "geographic_scope";
    case ConstraintKind::kComputeCost: return "compute_cost";
    case ConstraintKind::kRateLimit: return "rate_limit";
  }
  return "data_availability";
}

const PortSpec* CapabilityEntry::find_input(std::string_view name) const {
  for (const auto& p : inputs)
    if (p.name == name) return &p;
  return nullptr;
}

const PortSpec* CapabilityEntry::find_output(std::string_view name) const {
  for (const auto& p : outputs)
    if (p.name == name) return &p;
  return nullptr;
}

std::string CapabilityEntry::function_name() const {
  auto dot = id.find('.');
  return dot == std::string::npos ? id : id.substr(dot + 1);
}

const CapabilityEntry* Registry::find(std::string_view id) const {
  auto it = entries.find(std::string(id));
  return it == entries.end() ? nullptr : &it->second;
}

const Translation* Registry::find_translation(std::string_view adapter_id) const {
  for (const auto& t : translations)
    if (t.adapter_id == adapter_id) return &t;
  return nullptr;
}

bool Registry::has_kind(std::string_view kind) const {
  return std::any_of(vocabulary.begin(), vocabulary.end(),
                     [&](const DataKindSpec& s) { return s.kind == kind; });
}

std::optional<DataKindSpec> Registry::spec_for_kind(std::string_view kind) const {
  for (const auto& s : vocabulary)
    if (s.kind == kind) return s;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Document parsing

namespace {

struct Ctx {
  std::string file;

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw Error(ErrorCode::kSchemaViolation, file + ": field '" + field + "': " + what,
                {file, field});
  }

  void only_keys(const Json& doc, std::initializer_list<std::string_view> allowed,
                 const std::string& where) const {
    if (!doc.is_object()) fail(where, "expected an object");
    for (const auto& [key, _] : doc.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(where.empty() ? key : where + "." + key, "unknown field");
      }
    }
  }

  const Json& require(const Json& doc, const std::string& key, const std::string& where) const {
    auto it = doc.find(key);
    if (it == doc.end()) fail(where.empty() ? key : where + "." + key, "missing required field");
    return *it;
  }

  std::string string_field(const Json& doc, const std::string& key, const std::string& where) const {
    const auto& v = require(doc, key, where);
    if (!v.is_string()) fail(where.empty() ? key : where + "." + key, "expected a string");
    return v.get<std::string>();
  }

  Rational rational_field(const Json& doc, const std::string& key, const std::string& where) const {
    const auto& v = require(doc, key, where);
    try {
      return rational_from_json(v);
    } catch (const Error&) {
      fail(where.empty() ? key : where + "." + key, "expected a rational");
    }
  }
};

DataKindSpec parse_kind(const Ctx& ctx, const Json& doc, const std::string& where,
                        std::initializer_list<std::string_view> extra_keys = {}) {
  std::vector<std::string_view> allowed{"kind", "format", "unit"};
  allowed.insert(allowed.end(), extra_keys.begin(), extra_keys.end());
  if (!doc.is_object()) ctx.fail(where, "expected an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) ctx.fail(where + "." + key, "unknown field");
  }
  DataKindSpec spec;
  spec.kind = ctx.string_field(doc, "kind", where);
  if (!is_token(spec.kind)) ctx.fail(where + ".kind", "kind must match [a-z0-9_]+");
  try {
    spec.format = parse_data_format(ctx.string_field(doc, "format", where));
  } catch (const Error&) {
    ctx.fail(where + ".format", "format must be one of table|series|scalar|graph");
  }
  if (doc.contains("unit")) spec.unit = ctx.string_field(doc, "unit", where);
  return spec;
}

const std::map<ConstraintKind, std::pair<std::vector<std::string>, std::vector<std::string>>>&
constraint_schema() {
  // kind -> (required keys, optional keys)
  static const std::map<ConstraintKind, std::pair<std::vector<std::string>, std::vector<std::string>>> schema{
      {ConstraintKind::kDataAvailability, {{"dataset"}, {"status"}}},
      {ConstraintKind::kTemporalCoverage, {{"start", "end"}, {}}},
      {ConstraintKind::kGeographicScope, {{"regions"}, {}}},
      {ConstraintKind::kComputeCost, {{"class"}, {}}},
      {ConstraintKind::kRateLimit, {{"requests_per_hour"}, {}}},
  };
  return schema;
}

Constraint parse_constraint(const Ctx& ctx, const Json& doc, const std::string& where) {
  ctx.only_keys(doc, {"kind", "params"}, where);
  auto kind_text = ctx.string_field(doc, "kind", where);
  Constraint c;
  bool found = false;
  for (auto k : {ConstraintKind::kDataAvailability, ConstraintKind::kTemporalCoverage,
                 ConstraintKind::kGeographicScope, ConstraintKind::kComputeCost, ConstraintKind::kRateLimit}) {
    if (to_string(k) == kind_text) {
      c.kind = k;
      found = true;
    }
  }
  if (!found) ctx.fail(where + ".kind", "unknown constraint kind '" + kind_text + "'");
  const auto& params = ctx.require(doc, "params", where);
  if (!params.is_object()) ctx.fail(where + ".params", "expected an object");
  const auto& [required, optional] = constraint_schema().at(c.kind);
  for (const auto& [key, value] : params.items()) {
    bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                 std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) ctx.fail(where + ".params." + key, "not a parameter of " + kind_text);
    if (!value.is_string()) ctx.fail(where + ".params." + key, "expected a string");
    c.params[key] = value.get<std::string>();
  }
  for (const auto& key : required) {
    if (!c.params.count(key)) ctx.fail(where + ".params." + key, "missing required parameter");
  }
  if (c.kind == ConstraintKind::kTemporalCoverage) {
    try {
      parse_iso8601(c.params["start"]);
      parse_iso8601(c.params["end"]);
    } catch (const Error&) {
      ctx.fail(where + ".params", "temporal_coverage bounds must be ISO-8601 UTC");
    }
  }
  return c;
}

std::vector<PortSpec> parse_ports(const Ctx& ctx, const Json& doc, const std::string& field, bool inputs) {
  if (!doc.is_array()) ctx.fail(field, "expected an array");
  std::vector<PortSpec> ports;
  std::set<std::string> names;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto where = field + "[" + std::to_string(i) + "]";
    PortSpec port;
    if (inputs) {
      port.data = parse_kind(ctx, doc[i], where, {"name", "required"});
      if (doc[i].contains("required")) {
        if (!doc[i]["required"].is_boolean()) ctx.fail(where + ".required", "expected a boolean");
        port.required = doc[i]["required"].get<bool>();
      }
    } else {
      port.data = parse_kind(ctx, doc[i], where, {"name"});
    }
    port.name = ctx.string_field(doc[i], "name", where);
    if (!is_token(port.name)) ctx.fail(where + ".name", "port name must match [a-z0-9_]+");
    if (!names.insert(port.name).second) ctx.fail(where + ".name", "duplicate port name '" + port.name + "'");
    ports.push_back(std::move(port));
  }
  return ports;
}

CompositeDefinition parse_composite(const Ctx& ctx, const Json& doc) {
  ctx.only_keys(doc, {"chain", "bindings", "outputs"}, "composite_of");
  CompositeDefinition def;
  const auto& chain = ctx.require(doc, "chain", "composite_of");
  if (!chain.is_array() || chain.size() < 2) ctx.fail("composite_of.chain", "expected >= 2 capability ids");
  for (const auto& id : chain) {
    if (!id.is_string()) ctx.fail("composite_of.chain", "expected capability id strings");
    def.chain.push_back(id.get<std::string>());
  }
  const auto& bindings = ctx.require(doc, "bindings", "composite_of");
  if (!bindings.is_array()) ctx.fail("composite_of.bindings", "expected an array");
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    auto where = "composite_of.bindings[" + std::to_string(i) + "]";
    const auto& b = bindings[i];
    ctx.only_keys(b, {"member", "port", "from_member", "from_port", "from_input"}, where);
    CompositeBinding cb;
    if (!ctx.require(b, "member", where).is_number_integer()) ctx.fail(where + ".member", "expected an integer");
    cb.member = b["member"].get<int>();
    cb.port = ctx.string_field(b, "port", where);
    if (b.contains("from_input")) {
      cb.source_member = -1;
      cb.source_port = ctx.string_field(b, "from_input", where);
    } else {
      if (!ctx.require(b, "from_member", where).is_number_integer())
        ctx.fail(where + ".from_member", "expected an integer");
      cb.source_member = b["from_member"].get<int>();
      cb.source_port = ctx.string_field(b, "from_port", where);
      if (cb.source_member < 0 || cb.source_member >= cb.member)
        ctx.fail(where + ".from_member", "must reference an earlier chain member");
    }
    if (cb.member < 0 || cb.member >= static_cast<int>(def.chain.size()))
      ctx.fail(where + ".member", "out of range");
    def.bindings.push_back(cb);
  }
  const auto& outputs = ctx.require(doc, "outputs", "composite_of");
  if (!outputs.is_array() || outputs.empty()) ctx.fail("composite_of.outputs", "expected a non-empty array");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto where = "composite_of.outputs[" + std::to_string(i) + "]";
    ctx.only_keys(outputs[i], {"name", "member", "port"}, where);
    auto name = ctx.string_field(outputs[i], "name", where);
    if (!ctx.require(outputs[i], "member", where).is_number_integer())
      ctx.fail(where + ".member", "expected an integer");
    int member = outputs[i]["member"].get<int>();
    if (member < 0 || member >= static_cast<int>(def.chain.size())) ctx.fail(where + ".member", "out of range");
    def.outputs.push_back({name, {member, ctx.string_field(outputs[i], "port", where)}});
  }
  return def;
}

}  // namespace

Constraint constraint_from_json(const Json& doc, const std::string& where) {
  return parse_constraint(Ctx{"<document>"}, doc, where);
}

Json to_json(const DataKindSpec& spec) {
  Json doc{{"kind", spec.kind}, {"format", std::string(to_string(spec.format))}};
  if (!spec.unit.empty()) doc["unit"] = spec.unit;
  return doc;
}

DataKindSpec data_kind_from_json(const Json& doc) { return parse_kind(Ctx{"<document>"}, doc, "data"); }

Json to_json(const PortSpec& port, bool is_input) {
  Json doc = to_json(port.data);
  doc["name"] = port.name;
  if (is_input) doc["required"] = port.required;
  return doc;
}

Json to_json(const Constraint& constraint) {
  Json params = Json::object();
  for (const auto& [k, v] : constraint.params) params[k] = v;
  return {{"kind", std::string(to_string(constraint.kind))}, {"params", params}};
}

Json to_json(const CapabilityEntry& entry) {
  Json doc;
  doc["id"] = entry.id;
  doc["framework"] = entry.framework;
  doc["description"] = entry.description;
  doc["inputs"] = Json::array();
  for (const auto& p : entry.inputs) doc["inputs"].push_back(to_json(p, true));
  doc["outputs"] = Json::array();
  for (const auto& p : entry.outputs) doc["outputs"].push_back(to_json(p, false));
  doc["constraints"] = Json::array();
  for (const auto& c : entry.constraints) doc["constraints"].push_back(to_json(c));
  doc["cost_hint"] = to_string(entry.cost_hint);
  doc["reliability"] = to_string(entry.reliability);
  doc["provenance"] = entry.provenance == Provenance::kManual ? "manual" : "curated";
  doc["version"] = entry.version;
  if (!entry.parameters.empty()) doc["parameters"] = entry.parameters;
  if (entry.composite) {
    Json comp;
    comp["chain"] = entry.composite->chain;
    comp["bindings"] = Json::array();
    for (const auto& b : entry.composite->bindings) {
      Json jb{{"member", b.member}, {"port", b.port}};
      if (b.source_member < 0) {
        jb["from_input"] = b.source_port;
      } else {
        jb["from_member"] = b.source_member;
        jb["from_port"] = b.source_port;
      }
      comp["bindings"].push_back(jb);
    }
    comp["outputs"] = Json::array();
    for (const auto& [name, src] : entry.composite->outputs)
      comp["outputs"].push_back({{"name", name}, {"member", src.first}, {"port", src.second}});
    doc["composite_of"] = comp;
  }
  return doc;
}

CapabilityEntry capability_from_json(const Json& doc, const std::string& source) {
  Ctx ctx{source};
  ctx.only_keys(doc,
                {"id", "framework", "description", "inputs", "outputs", "constraints", "cost_hint", "reliability",
                 "provenance", "version", "parameters", "composite_of"},
                "");
  CapabilityEntry e;
  e.id = ctx.string_field(doc, "id", "");
  auto dot = e.id.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == e.id.size())
    ctx.fail("id", "expected 'framework.function'");
  e.framework = ctx.string_field(doc, "framework", "");
  if (e.id.substr(0, dot) != e.framework) ctx.fail("framework", "must match the id prefix");
  e.description = ctx.string_field(doc, "description", "");
  e.inputs = parse_ports(ctx, ctx.require(doc, "inputs", ""), "inputs", true);
  e.outputs = parse_ports(ctx, ctx.require(doc, "outputs", ""), "outputs", false);
  if (e.outputs.empty()) ctx.fail("outputs", "at least one output port is required");
  const auto& constraints = ctx.require(doc, "constraints", "");
  if (!constraints.is_array()) ctx.fail("constraints", "expected an array");
  for (std::size_t i = 0; i < constraints.size(); ++i)
    e.constraints.push_back(parse_constraint(ctx, constraints[i], "constraints[" + std::to_string(i) + "]"));
  e.cost_hint = ctx.rational_field(doc, "cost_hint", "");
  if (e.cost_hint < 0) ctx.fail("cost_hint", "must be non-negative");
  e.reliability = ctx.rational_field(doc, "reliability", "");
  if (e.reliability < 0 || e.reliability > 1) ctx.fail("reliability", "must lie in [0,1]");
  auto provenance = ctx.string_field(doc, "provenance", "");
  if (provenance == "manual") {
    e.provenance = Provenance::kManual;
  } else if (provenance == "curated") {
    e.provenance = Provenance::kCurated;
  } else {
    ctx.fail("provenance", "must be manual or curated");
  }
  const auto& version = ctx.require(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() < 1) ctx.fail("version", "must be an integer >= 1");
  e.version = version.get<int>();
  if (doc.contains("parameters")) {
    if (!doc["parameters"].is_object()) ctx.fail("parameters", "expected an object");
    for (const auto& [k, v] : doc["parameters"].items()) {
      if (!v.is_string()) ctx.fail("parameters." + k, "expected a string");
      e.parameters[k] = v.get<std::string>();
    }
  }
  if (doc.contains("composite_of")) e.composite = parse_composite(ctx, doc["composite_of"]);
  if (e.provenance == Provenance::kCurated && !e.composite)
    ctx.fail("composite_of", "curated entries must reference a composite definition");
  if (e.provenance == Provenance::kManual && e.composite)
    ctx.fail("composite_of", "only curated entries may declare a composite");
  return e;
}

Json to_json(const Translation& t) {
  return {{"from", to_json(t.from)},
          {"to", to_json(t.to)},
          {"adapter_id", t.adapter_id},
          {"cost", to_string(t.cost)},
          {"lossy", t.lossy}};
}

// ---------------------------------------------------------------------------
// Loading

namespace {

void check_declared(const Registry& reg, const DataKindSpec& spec, const std::string& file,
                    const std::string& field) {
  if (!reg.declares(spec)) {
    throw Error(ErrorCode::kUnknownKind,
                file + ": field '" + field + "': kind " + spec.label() + " is not declared in vocabulary.json",
                {file, field});
  }
}

void check_zero_cost_cycles(const Registry& reg, const std::string& file) {
  std::map<DataKindSpec, std::vector<DataKindSpec>> zero_edges;
  for (const auto& t : reg.translations)
    if (t.cost == 0) zero_edges[t.from].push_back(t.to);
  std::map<DataKindSpec, int> color;
  std::function<bool(const DataKindSpec&)> dfs = [&](const DataKindSpec& node) {
    color[node] = 1;
    for (const auto& next : zero_edges[node]) {
      if (color[next] == 1) return true;
      if (color[next] == 0 && dfs(next)) return true;
    }
    color[node] = 2;
    return false;
  };
  for (const auto& [node, _] : zero_edges) {
    if (color[node] == 0 && dfs(node)) {
      throw Error(ErrorCode::kSchemaViolation, file + ": translation graph contains a zero-cost cycle",
                  {file, "cost"});
    }
  }
}

}  // namespace

Registry load_registry(const fs::path& directory) {
  Registry reg;
  auto vocab_file = (directory / "vocabulary.json").string();
  auto vocab = read_json_file(directory / "vocabulary.json");
  Ctx vctx{vocab_file};
  if (!vocab.is_array()) vctx.fail("", "expected an array of data kinds");
  for (std::size_t i = 0; i < vocab.size(); ++i)
    reg.vocabulary.insert(parse_kind(vctx, vocab[i], "[" + std::to_string(i) + "]"));

  auto trans_file = (directory / "translations.json").string();
  auto trans = read_json_file(directory / "translations.json");
  Ctx tctx{trans_file};
  if (!trans.is_array()) tctx.fail("", "expected an array of translations");
  std::set<std::string> adapter_ids;
  for (std::size_t i = 0; i < trans.size(); ++i) {
    auto where = "[" + std::to_string(i) + "]";
    tctx.only_keys(trans[i], {"from", "to", "adapter_id", "cost", "lossy"}, where);
    Translation t;
    t.from = parse_kind(tctx, tctx.require(trans[i], "from", where), where + ".from");
    t.to = parse_kind(tctx, tctx.require(trans[i], "to", where), where + ".to");
    t.adapter_id = tctx.string_field(trans[i], "adapter_id", where);
    if (trans[i].contains("cost")) t.cost = tctx.rational_field(trans[i], "cost", where);
    if (t.cost < 0) tctx.fail(where + ".cost", "must be non-negative");
    if (trans[i].contains("lossy")) {
      if (!trans[i]["lossy"].is_boolean()) tctx.fail(where + ".lossy", "expected a boolean");
      t.lossy = trans[i]["lossy"].get<bool>();
    }
    if (t.from == t.to) tctx.fail(where, "from and to must differ");
    if (!adapter_ids.insert(t.adapter_id).second)
      throw Error(ErrorCode::kDuplicateId, trans_file + ": adapter id '" + t.adapter_id + "' declared twice",
                  {trans_file, where + ".adapter_id"});
    check_declared(reg, t.from, trans_file, where + ".from");
    check_declared(reg, t.to, trans_file, where + ".to");
    reg.translations.push_back(std::move(t));
  }
  std::sort(reg.translations.begin(), reg.translations.end(),
            [](const Translation& a, const Translation& b) { return a.adapter_id < b.adapter_id; });
  check_zero_cost_cycles(reg, trans_file);

  std::vector<fs::path> files;
  auto cap_dir = directory / "capabilities";
  if (fs::exists(cap_dir)) {
    for (const auto& item : fs::recursive_directory_iterator(cap_dir)) {
      if (item.is_regular_file() && item.path().extension() == ".json") files.push_back(item.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, std::string> origin;  // id -> file
  for (const auto& path : files) {
    auto file = path.string();
    auto entry = capability_from_json(read_json_file(path), file);
    for (std::size_t i = 0; i < entry.inputs.size(); ++i)
      check_declared(reg, entry.inputs[i].data, file, "inputs[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < entry.outputs.size(); ++i)
      check_declared(reg, entry.outputs[i].data, file, "outputs[" + std::to_string(i) + "]");
    if (auto it = origin.find(entry.id); it != origin.end()) {
      throw Error(ErrorCode::kDuplicateId,
                  "capability id '" + entry.id + "' declared in both " + it->second + " and " + file,
                  {it->second, file});
    }
    origin[entry.id] = file;
    reg.entries.emplace(entry.id, std::move(entry));
  }
  for (const auto& [id, entry] : reg.entries) {
    if (!entry.composite) continue;
    for (const auto& member : entry.composite->chain) {
      if (!reg.find(member) || reg.find(member)->composite) {
        throw Error(ErrorCode::kSchemaViolation,
                    origin[id] + ": field 'composite_of.chain': '" + member + "' is not a manual registry entry",
                    {origin[id], "composite_of.chain"});
      }
    }
  }
  return reg;
}

std::vector<const CapabilityEntry*> find_producers(const Registry& registry, std::string_view kind) {
  if (!registry.has_kind(kind))
    throw Error(ErrorCode::kUnknownKind, "kind '" + std::string(kind) + "' is not in the registry vocabulary");
  std::vector<const CapabilityEntry*> out;
  for (const auto& [id, entry] : registry.entries) {
    if (std::any_of(entry.outputs.begin(), entry.outputs.end(),
                    [&](const PortSpec& p) { return p.data.kind == kind; })) {
      out.push_back(&entry);
    }
  }
  return out;
}

CompatibilityResult check_compatibility(const DataKindSpec& from, const DataKindSpec& to, const Registry& registry) {
  if (from == to) return Direct{};
  using Key = std::tuple<Rational, std::vector<std::string>, DataKindSpec>;
  std::set<Key> frontier;
  std::map<DataKindSpec, std::vector<std::string>> settled;
  frontier.insert({Rational(0), {}, from});
  while (!frontier.empty()) {
    auto [cost, path, node] = *frontier.begin();
    frontier.erase(frontier.begin());
    if (settled.count(node)) continue;
    settled[node] = path;
    if (node == to) {
      ViaAdapters via;
      via.total_cost = cost;
      for (const auto& id : path) via.path.push_back(*registry.find_translation(id));
      return via;
    }
    for (const auto& t : registry.translations) {
      if (t.from != node || settled.count(t.to)) continue;
      auto next = path;
      next.push_back(t.adapter_id);
      frontier.insert({cost + t.cost, std::move(next), t.to});
    }
  }
  return Incompatible{};
}

CompatibilityResult check_compatibility(const PortSpec& out, const PortSpec& in, const Registry& registry) {
  return check_compatibility(out.data, in.data, registry);
}

// ---------------------------------------------------------------------------
// RegistryStore

RegistryStore::RegistryStore(fs::path root) : root_(std::move(root)) {}

void RegistryStore::initialize_from(const fs::path& seed) {
  std::lock_guard lock(write_mutex_);
  if (latest_version() > 0) return;
  auto dir = version_dir(1);
  fs::create_directories(dir.parent_path());
  auto tmp = root_ / "v1.tmp";
  fs::remove_all(tmp);
  fs::copy(seed, tmp, fs::copy_options::recursive);
  load_registry(tmp);
  fs::rename(tmp, dir);
}

int RegistryStore::latest_version() const {
  int latest = 0;
  if (!fs::exists(root_)) return 0;
  for (const auto& item : fs::directory_iterator(root_)) {
    auto name = item.path().filename().string();
    if (item.is_directory() && name.size() > 1 && name[0] == 'v' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      latest = std::max(latest, std::stoi(name.substr(1)));
    }
  }
  return latest;
}

fs::path RegistryStore::version_dir(int version) const { return root_ / ("v" + std::to_string(version)); }

RegistryPtr RegistryStore::load(int version) const {
  auto dir = version_dir(version);
  if (!fs::exists(dir)) throw Error(ErrorCode::kNotFound, "registry version " + std::to_string(version) + " not found");
  auto reg = std::make_shared<Registry>(load_registry(dir));
  reg->version = version;
  return reg;
}

int RegistryStore::commit_new_version(const std::function<void(const fs::path&)>& mutate) {
  std::lock_guard lock(write_mutex_);
  int current = latest_version();
  if (current == 0) throw Error(ErrorCode::kConfigError, "registry store is empty");
  int next = current + 1;
  auto tmp = root_ / ("v" + std::to_string(next) + ".tmp");
  fs::remove_all(tmp);
  fs::copy(version_dir(current), tmp, fs::copy_options::recursive);
  try {
    mutate(tmp);
    load_registry(tmp);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  fs::rename(tmp, version_dir(next));
  return next;
}

}  // namespace arachnet
