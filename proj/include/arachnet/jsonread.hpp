#pragma once

// Small helpers for strict document parsing. Every failure is a
// SchemaViolation naming the document path of the offending field.

#include "arachnet/error.hpp"
#include "arachnet/rational.hpp"
#include "arachnet/util.hpp"

#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace arachnet::jsonread {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, where + ": " + what, {where + ": " + what});
}

inline void expect_object(const Json& doc, const std::string& where) {
  if (!doc.is_object()) fail(where, "expected an object");
}

inline void check_keys(const Json& doc, std::initializer_list<const char*> allowed, const std::string& where) {
  expect_object(doc, where);
  for (const auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(where + "." + key, "unknown field");
  }
}

inline const Json& field(const Json& doc, const char* key, const std::string& where) {
  expect_object(doc, where);
  auto it = doc.find(key);
  if (it == doc.end()) fail(where + "." + key, "missing required field");
  return *it;
}

inline std::string string_field(const Json& doc, const char* key, const std::string& where) {
  const auto& v = field(doc, key, where);
  if (!v.is_string()) fail(where + "." + key, "expected a string");
  return v.get<std::string>();
}

inline std::string opt_string(const Json& doc, const char* key, const std::string& where,
                              const std::string& fallback = "") {
  if (!doc.contains(key)) return fallback;
  return string_field(doc, key, where);
}

inline std::vector<std::string> string_list(const Json& doc, const char* key, const std::string& where,
                                            bool required = true) {
  if (!doc.contains(key)) {
    if (required) fail(where + "." + key, "missing required field");
    return {};
  }
  const auto& v = doc.at(key);
  if (!v.is_array()) fail(where + "." + key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) fail(where + "." + key + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

inline const Json& array_field(const Json& doc, const char* key, const std::string& where) {
  const auto& v = field(doc, key, where);
  if (!v.is_array()) fail(where + "." + key, "expected an array");
  return v;
}

inline Rational rational_field(const Json& doc, const char* key, const std::string& where) {
  const auto& v = field(doc, key, where);
  try {
    return rational_from_json(v);
  } catch (const Error&) {
    fail(where + "." + key, "expected a rational number");
  }
}

inline bool bool_field(const Json& doc, const char* key, const std::string& where, std::optional<bool> fallback = {}) {
  if (!doc.contains(key)) {
    if (fallback) return *fallback;
    fail(where + "." + key, "missing required field");
  }
  const auto& v = doc.at(key);
  if (!v.is_boolean()) fail(where + "." + key, "expected a boolean");
  return v.get<bool>();
}

inline std::map<std::string, std::string> string_map(const Json& doc, const char* key, const std::string& where) {
  std::map<std::string, std::string> out;
  if (!doc.contains(key)) return out;
  const auto& v = doc.at(key);
  expect_object(v, where + "." + key);
  for (const auto& [k, val] : v.items()) {
    if (!val.is_string()) fail(where + "." + key + "." + k, "expected a string");
    out[k] = val.get<std::string>();
  }
  return out;
}

}  // namespace arachnet::jsonread
