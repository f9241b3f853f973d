#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

namespace arachnet {

// Exact arithmetic for costs, reliabilities, probabilities and measurement
// values. Serialized as canonical "n" or "n/d" strings.
using Rational = boost::multiprecision::cpp_rational;

// Accepts "3", "-2/7", "0.10", "1.5e-1" is NOT accepted (decimal only).
// Throws Error(kSchemaViolation) on malformed input.
Rational parse_rational(std::string_view text);

// Accepts a JSON integer or a string in the forms above. Floating point JSON
// numbers are converted through their shortest decimal representation.
Rational rational_from_json(const nlohmann::json& value);

std::string to_string(const Rational& value);
double to_double(const Rational& value);

inline nlohmann::json rational_to_json(const Rational& value) { return to_string(value); }

// True if the JSON value is an integer or a string that parses as a rational.
bool is_numeric_json(const nlohmann::json& value);

}  // namespace arachnet
