#pragma once

#include "arachnet/registry.hpp"
#include "arachnet/util.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

namespace fs = std::filesystem;
using arachnet::Json;

inline fs::path source_dir() { return fs::path(ARACHNET_SOURCE_DIR); }
inline fs::path fixture_registry() { return source_dir() / "fixtures" / "registry"; }
inline fs::path fixture_topo() { return source_dir() / "fixtures" / "minitopo"; }

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / ("arachnet_test_" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline Json port(const std::string& name, const std::string& kind, bool input = true) {
  Json p{{"name", name}, {"kind", kind}, {"format", "table"}};
  if (input) p["required"] = true;
  return p;
}

inline Json capability(const std::string& id, const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs, const std::string& cost = "1",
                       const std::string& reliability = "1") {
  Json doc{{"id", id},
           {"framework", id.substr(0, id.find('.'))},
           {"description", "Test capability."},
           {"inputs", Json::array()},
           {"outputs", Json::array()},
           {"constraints", Json::array()},
           {"cost_hint", cost},
           {"reliability", reliability},
           {"provenance", "manual"},
           {"version", 1}};
  int i = 0;
  for (const auto& k : inputs) doc["inputs"].push_back(port("in" + std::to_string(i++), k));
  i = 0;
  for (const auto& k : outputs) doc["outputs"].push_back(port("out" + std::to_string(i++), k, false));
  return doc;
}

inline Json translation(const std::string& from, const std::string& to, const std::string& id,
                        const std::string& cost = "0.5") {
  return {{"from", {{"kind", from}, {"format", "table"}}},
          {"to", {{"kind", to}, {"format", "table"}}},
          {"adapter_id", id},
          {"cost", cost},
          {"lossy", false}};
}

// Writes a registry directory with table-format kinds.
inline void write_registry(const fs::path& dir, const std::vector<std::string>& kinds,
                           const std::vector<Json>& capabilities, const std::vector<Json>& translations = {}) {
  fs::create_directories(dir / "capabilities");
  Json vocab = Json::array();
  for (const auto& k : kinds) vocab.push_back({{"kind", k}, {"format", "table"}});
  arachnet::write_json_file(dir / "vocabulary.json", vocab);
  arachnet::write_json_file(dir / "translations.json", Json(translations));
  for (const auto& c : capabilities)
    arachnet::write_json_file(dir / "capabilities" / (c["id"].get<std::string>() + ".json"), c);
}

}  // namespace testsupport
