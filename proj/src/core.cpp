#include "arachnet/error.hpp"
#include "arachnet/rational.hpp"
#include "arachnet/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace arachnet {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownKind: return "UnknownKind";
    case ErrorCode::kUnknownCapability: return "UnknownCapability";
    case ErrorCode::kIntentError: return "IntentError";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kUnknownGoalKind: return "UnknownGoalKind";
    case ErrorCode::kNoPlan: return "NoPlan";
    case ErrorCode::kCompileError: return "CompileError";
    case ErrorCode::kMissingAdapter: return "MissingAdapter";
    case ErrorCode::kMissingRunInput: return "MissingRunInput";
    case ErrorCode::kAdapterMismatch: return "AdapterMismatch";
    case ErrorCode::kUnknownCable: return "UnknownCable";
    case ErrorCode::kUncoveredIp: return "UncoveredIp";
    case ErrorCode::kBadProbability: return "BadProbability";
    case ErrorCode::kInsufficientBaseline: return "InsufficientBaseline";
    case ErrorCode::kNoAnomaly: return "NoAnomaly";
    case ErrorCode::kReplayError: return "ReplayError";
    case ErrorCode::kIdCollision: return "IdCollision";
    case ErrorCode::kPreconditionFailed: return "PreconditionFailed";
    case ErrorCode::kWrongState: return "WrongState";
    case ErrorCode::kInvalidEdit: return "InvalidEdit";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string render_message(ErrorCode code, const std::string& message) {
  std::string out(error_code_name(code));
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::vector<std::string> details)
    : std::runtime_error(render_message(code, message)), code_(code), details_(std::move(details)) {}

// ---------------------------------------------------------------------------
// Rational

namespace {

using boost::multiprecision::cpp_int;

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

[[noreturn]] void bad_rational(std::string_view text) {
  throw Error(ErrorCode::kSchemaViolation, "malformed rational '" + std::string(text) + "'");
}

}  // namespace

Rational parse_rational(std::string_view text) {
  std::string_view body = text;
  bool negative = false;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  Rational result;
  if (auto slash = body.find('/'); slash != std::string_view::npos) {
    auto num = body.substr(0, slash);
    auto den = body.substr(slash + 1);
    if (!all_digits(num) || !all_digits(den)) bad_rational(text);
    cpp_int d{std::string(den)};
    if (d == 0) bad_rational(text);
    result = Rational(cpp_int(std::string(num)), d);
  } else if (auto dot = body.find('.'); dot != std::string_view::npos) {
    auto whole = body.substr(0, dot);
    auto frac = body.substr(dot + 1);
    if ((!whole.empty() && !all_digits(whole)) || !all_digits(frac)) bad_rational(text);
    cpp_int scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
    cpp_int numerator = cpp_int(std::string(whole.empty() ? "0" : whole)) * scale +
                        cpp_int(std::string(frac));
    result = Rational(numerator, scale);
  } else {
    if (!all_digits(body)) bad_rational(text);
    result = Rational(cpp_int(std::string(body)));
  }
  return negative ? Rational(-result) : result;
}

Rational rational_from_json(const nlohmann::json& value) {
  if (value.is_number_integer()) return Rational(value.get<std::int64_t>());
  if (value.is_number_unsigned()) return Rational(cpp_int(value.get<std::uint64_t>()));
  if (value.is_number_float()) return parse_rational(value.dump());
  if (value.is_string()) return parse_rational(value.get<std::string>());
  throw Error(ErrorCode::kSchemaViolation, "expected a rational, got " + value.dump());
}

std::string to_string(const Rational& value) {
  auto num = boost::multiprecision::numerator(value);
  auto den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

double to_double(const Rational& value) { return value.convert_to<double>(); }

bool is_numeric_json(const nlohmann::json& value) {
  if (value.is_number()) return true;
  if (!value.is_string()) return false;
  try {
    parse_rational(value.get<std::string>());
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Serialization, digests, files

std::string canonical_dump(const Json& value) { return value.dump(); }

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(md[i]);
  return out.str();
}

std::int64_t parse_iso8601(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = 0;
  std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 7 ||
      tail != 'Z' || buf.size() != 20) {
    throw Error(ErrorCode::kSchemaViolation, "malformed ISO-8601 UTC timestamp '" + buf + "'");
  }
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw Error(ErrorCode::kSchemaViolation, "invalid ISO-8601 date '" + buf + "'");
  }
  auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  auto days = epoch_seconds >= 0 ? epoch_seconds / 86400 : (epoch_seconds - 86399) / 86400;
  auto rem = epoch_seconds - days * 86400;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const Json& value, int indent) {
  write_text_file(path, value.dump(indent) + "\n");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_token(std::string_view text) {
  if (text.empty()) return false;
  for (char c : text) {
    if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
          c == '_')) {
      return false;
    }
  }
  return true;
}

std::int64_t SystemClock::now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace arachnet
