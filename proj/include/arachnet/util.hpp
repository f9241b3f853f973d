#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace arachnet {

using Json = nlohmann::json;

// Canonical serialization used for every digest: sorted keys, no whitespace.
std::string canonical_dump(const Json& value);

std::string sha256_hex(std::string_view data);
inline std::string digest_of(const Json& value) { return sha256_hex(canonical_dump(value)); }

// ISO-8601 UTC ("2024-03-05T00:00:00Z") <-> seconds since epoch.
std::int64_t parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

Json read_json_file(const std::filesystem::path& path);
// Writes via a temporary file + rename so readers never observe partial files.
void write_json_file(const std::filesystem::path& path, const Json& value, int indent = 2);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

bool is_token(std::string_view text);  // [a-z0-9_]+

// Milliseconds since epoch; injectable so runs can be replayed with a fixed clock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() override;
};

// Returns `start`, then advances by `step` on every call.
class FixedClock final : public Clock {
 public:
  explicit FixedClock(std::int64_t start_ms, std::int64_t step_ms = 0)
      : current_(start_ms), step_(step_ms) {}
  std::int64_t now_ms() override { return current_.fetch_add(step_); }

 private:
  std::atomic<std::int64_t> current_;
  std::int64_t step_;
};

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace arachnet
