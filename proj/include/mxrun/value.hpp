#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <system_error>
#include <variant>

#include <json.hpp>

namespace mxrun {

enum class ValueTag { string, integer, floating, boolean, null };

// One scalar cell of the configuration matrix: a parameter value or a
// run-level setting. Equality is tag-then-value, so integer 1, float 1.0
// and string "1" are three distinct values. Floats must be finite so the
// canonical encoding is total.
class ParamValue {
public:
  ParamValue() : storage_(std::monostate{}) {}
  ParamValue(std::string v) : storage_(std::move(v)) {}
  ParamValue(const char* v) : storage_(std::string(v)) {}
  ParamValue(std::int64_t v) : storage_(v) {}
  ParamValue(int v) : storage_(static_cast<std::int64_t>(v)) {}
  ParamValue(bool v) : storage_(v) {}
  ParamValue(double v) : storage_(v) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("non-finite float is not a valid parameter value");
    }
  }

  static ParamValue null() { return ParamValue(); }

  ValueTag tag() const {
    switch (storage_.index()) {
      case 0: return ValueTag::string;
      case 1: return ValueTag::integer;
      case 2: return ValueTag::floating;
      case 3: return ValueTag::boolean;
      default: return ValueTag::null;
    }
  }

  bool is_string() const { return tag() == ValueTag::string; }
  bool is_null() const { return tag() == ValueTag::null; }

  const std::string& as_string() const { return std::get<std::string>(storage_); }
  std::int64_t as_integer() const { return std::get<std::int64_t>(storage_); }
  double as_float() const { return std::get<double>(storage_); }
  bool as_boolean() const { return std::get<bool>(storage_); }

  // Single-character tag used by the canonical task encoding.
  char tag_code() const {
    switch (tag()) {
      case ValueTag::string: return 's';
      case ValueTag::integer: return 'i';
      case ValueTag::floating: return 'f';
      case ValueTag::boolean: return 'b';
      case ValueTag::null: return 'n';
    }
    return '?';
  }

  // Plain scalar rendering: raw string, decimal integer, shortest
  // round-trip decimal float, true/false, empty for null. Used for the
  // canonical encoding, template substitution and environment exports.
  std::string render() const {
    switch (tag()) {
      case ValueTag::string: return as_string();
      case ValueTag::integer: return std::to_string(as_integer());
      case ValueTag::floating: {
        char buf[64];
        auto r = std::to_chars(buf, buf + sizeof buf, as_float());
        return std::string(buf, r.ptr);
      }
      case ValueTag::boolean: return as_boolean() ? "true" : "false";
      case ValueTag::null: return "";
    }
    return "";
  }

  bool operator==(const ParamValue& other) const = default;

  nlohmann::json to_json() const {
    switch (tag()) {
      case ValueTag::string: return as_string();
      case ValueTag::integer: return as_integer();
      case ValueTag::floating: return as_float();
      case ValueTag::boolean: return as_boolean();
      case ValueTag::null: return nullptr;
    }
    return nullptr;
  }

  static ParamValue from_json(const nlohmann::json& j) {
    if (j.is_string()) return ParamValue(j.get<std::string>());
    if (j.is_number_integer()) return ParamValue(j.get<std::int64_t>());
    if (j.is_number_float()) return ParamValue(j.get<double>());
    if (j.is_boolean()) return ParamValue(j.get<bool>());
    if (j.is_null()) return ParamValue::null();
    throw std::invalid_argument("structured value cannot become a scalar parameter value");
  }

private:
  std::variant<std::string, std::int64_t, double, bool, std::monostate> storage_;
};

}  // namespace mxrun
