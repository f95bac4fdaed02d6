#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mxrun/diagnostics.hpp"
#include "mxrun/toml.hpp"
#include "mxrun/value.hpp"

namespace mxrun {

// A partial assignment; any task matching every pair is skipped during
// expansion.
struct ExclusionRule {
  std::vector<std::pair<std::string, ParamValue>> predicate;  // file order

  const ParamValue* find(std::string_view key) const {
    for (const auto& [k, v] : predicate) {
      if (k == key) return &v;
    }
    return nullptr;
  }

  bool operator==(const ExclusionRule&) const = default;
};

struct Dimension {
  std::string name;
  std::vector<ParamValue> values;

  bool operator==(const Dimension&) const = default;
};

// The declarative experiment set: named parameter dimensions whose
// Cartesian product defines the tasks, run-wide settings, and exclusions.
struct ConfigMatrix {
  std::vector<Dimension> dimensions;                           // declaration order
  std::vector<std::pair<std::string, ParamValue>> settings;    // declaration order
  std::vector<ExclusionRule> exclusions;

  const Dimension* find_dimension(std::string_view name) const {
    for (const auto& d : dimensions) {
      if (d.name == name) return &d;
    }
    return nullptr;
  }

  const ParamValue* find_setting(std::string_view name) const {
    for (const auto& [k, v] : settings) {
      if (k == name) return &v;
    }
    return nullptr;
  }

  bool operator==(const ConfigMatrix&) const = default;
};

// How to turn a task into a child process; lives in the config file under
// [runner] and can be overridden from the command line.
struct RunnerConfig {
  std::string command;
  std::optional<std::chrono::milliseconds> timeout;

  bool operator==(const RunnerConfig&) const = default;
};

struct ConfigFile {
  ConfigMatrix matrix;
  std::optional<RunnerConfig> runner;

  bool operator==(const ConfigFile&) const = default;
};

// -- parsing -----------------------------------------------------------------

namespace detail {

inline void build_parameters(const toml::Table& table, ConfigMatrix& matrix) {
  for (const auto& item : table.items) {
    if (!item.is_array()) {
      throw ConfigError("parameter \"" + item.key + "\" must be a list of values",
                        item.line, item.col);
    }
    matrix.dimensions.push_back(Dimension{item.key, item.array()});
  }
}

inline void build_settings(const toml::Table& table, ConfigMatrix& matrix) {
  for (const auto& item : table.items) {
    if (item.is_array()) {
      throw ConfigError("setting \"" + item.key + "\" must be a scalar", item.line,
                        item.col);
    }
    matrix.settings.emplace_back(item.key, item.scalar());
  }
}

inline ExclusionRule build_exclusion(const toml::Table& table) {
  ExclusionRule rule;
  for (const auto& item : table.items) {
    if (item.is_array()) {
      throw ConfigError("exclusion value for \"" + item.key + "\" must be a scalar",
                        item.line, item.col);
    }
    rule.predicate.emplace_back(item.key, item.scalar());
  }
  return rule;
}

inline RunnerConfig build_runner(const toml::Table& table) {
  RunnerConfig runner;
  for (const auto& item : table.items) {
    if (item.key == "command") {
      if (item.is_array() || !item.scalar().is_string()) {
        throw ConfigError("runner.command must be a string", item.line, item.col);
      }
      runner.command = item.scalar().as_string();
    } else if (item.key == "timeout_ms") {
      if (item.is_array() || item.scalar().tag() != ValueTag::integer ||
          item.scalar().as_integer() <= 0) {
        throw ConfigError("runner.timeout_ms must be a positive integer", item.line,
                          item.col);
      }
      runner.timeout = std::chrono::milliseconds(item.scalar().as_integer());
    } else {
      throw ConfigError("unknown runner key \"" + item.key + "\"", item.line, item.col);
    }
  }
  if (runner.command.empty()) {
    throw ConfigError("[runner] table needs a command", table.line);
  }
  return runner;
}

}  // namespace detail

// Parses a config file. Structural problems (syntax, missing [parameters],
// unsupported value shapes) throw ConfigError; semantic invariants are
// checked separately by validate().
inline ConfigFile parse_config(std::string_view text) {
  toml::Document doc = toml::parse(text);

  for (const auto& t : doc.tables) {
    if (t.name != "parameters" && t.name != "settings" && t.name != "runner") {
      if (t.name == "exclude") {
        throw ConfigError("[exclude] must be an array of tables; write [[exclude]]",
                          t.line);
      }
      throw ConfigError("unknown table [" + t.name + "]", t.line);
    }
  }
  for (const auto& t : doc.table_arrays) {
    if (t.name != "exclude") {
      throw ConfigError("unknown array of tables [[" + t.name + "]]", t.line);
    }
  }

  const toml::Table* params = doc.find_table("parameters");
  if (!params) {
    throw ConfigError("config has no [parameters] table");
  }

  ConfigFile file;
  detail::build_parameters(*params, file.matrix);
  if (const toml::Table* settings = doc.find_table("settings")) {
    detail::build_settings(*settings, file.matrix);
  }
  for (const auto& t : doc.table_arrays) {
    file.matrix.exclusions.push_back(detail::build_exclusion(t));
  }
  if (const toml::Table* runner = doc.find_table("runner")) {
    file.runner = detail::build_runner(*runner);
  }
  return file;
}

// -- serializing -------------------------------------------------------------

inline std::string serialize_config(const ConfigFile& file) {
  std::string out;
  out += "[parameters]\n";
  for (const auto& dim : file.matrix.dimensions) {
    out += toml::write_key(dim.name);
    out += " = [";
    for (std::size_t i = 0; i < dim.values.size(); i++) {
      if (i) out += ", ";
      out += toml::write_scalar(dim.values[i]);
    }
    out += "]\n";
  }
  if (!file.matrix.settings.empty()) {
    out += "\n[settings]\n";
    for (const auto& [k, v] : file.matrix.settings) {
      out += toml::write_key(k);
      out += " = ";
      out += toml::write_scalar(v);
      out += '\n';
    }
  }
  for (const auto& rule : file.matrix.exclusions) {
    out += "\n[[exclude]]\n";
    for (const auto& [k, v] : rule.predicate) {
      out += toml::write_key(k);
      out += " = ";
      out += toml::write_scalar(v);
      out += '\n';
    }
  }
  if (file.runner) {
    out += "\n[runner]\n";
    out += "command = ";
    out += toml::write_string(file.runner->command);
    out += '\n';
    if (file.runner->timeout) {
      out += "timeout_ms = " + std::to_string(file.runner->timeout->count()) + "\n";
    }
  }
  return out;
}

inline std::string serialize_config(const ConfigMatrix& matrix) {
  return serialize_config(ConfigFile{matrix, std::nullopt});
}

// -- validation --------------------------------------------------------------

// Checks the semantic invariants of a (parsed or constructed) matrix.
// Diagnostics are the return value; callers decide whether to abort.
inline std::vector<Diagnostic> validate(const ConfigMatrix& config) {
  std::vector<Diagnostic> diags;
  auto error = [&](std::string code, std::string path, std::string message) {
    diags.push_back(Diagnostic{Severity::error, std::move(code), std::move(path),
                               std::move(message)});
  };

  if (config.dimensions.empty()) {
    error("config.parameters.empty", "parameters",
          "at least one parameter dimension is required");
  }

  for (std::size_t i = 0; i < config.dimensions.size(); i++) {
    const Dimension& dim = config.dimensions[i];
    for (std::size_t j = 0; j < i; j++) {
      if (config.dimensions[j].name == dim.name) {
        error("config.dimension.duplicate-name", "parameters." + dim.name,
              "dimension \"" + dim.name + "\" declared more than once");
      }
    }
    if (dim.values.empty()) {
      error("config.dimension.no-values", "parameters." + dim.name,
            "dimension \"" + dim.name + "\" has no values");
    }
    for (std::size_t a = 0; a < dim.values.size(); a++) {
      for (std::size_t b = 0; b < a; b++) {
        if (dim.values[a] == dim.values[b]) {
          error("config.dimension.duplicate-value",
                "parameters." + dim.name + "[" + std::to_string(a) + "]",
                "dimension \"" + dim.name + "\" lists value " +
                    toml::write_scalar(dim.values[a]) + " more than once");
        }
      }
    }
  }

  for (std::size_t i = 0; i < config.settings.size(); i++) {
    const auto& [name, value] = config.settings[i];
    for (std::size_t j = 0; j < i; j++) {
      if (config.settings[j].first == name) {
        error("config.setting.duplicate-name", "settings." + name,
              "setting \"" + name + "\" declared more than once");
      }
    }
    if (config.find_dimension(name)) {
      error("config.names.overlap", "settings." + name,
            "\"" + name + "\" is both a parameter dimension and a setting");
    }
  }

  for (std::size_t i = 0; i < config.exclusions.size(); i++) {
    const ExclusionRule& rule = config.exclusions[i];
    const std::string base = "exclude[" + std::to_string(i) + "]";
    if (rule.predicate.empty()) {
      error("config.exclude.empty-predicate", base, "exclusion rule has no pairs");
    }
    for (std::size_t a = 0; a < rule.predicate.size(); a++) {
      const auto& [key, value] = rule.predicate[a];
      for (std::size_t b = 0; b < a; b++) {
        if (rule.predicate[b].first == key) {
          error("config.exclude.duplicate-key", base + "." + key,
                "exclusion rule repeats key \"" + key + "\"");
        }
      }
      const Dimension* dim = config.find_dimension(key);
      if (!dim) {
        error("config.exclude.unknown-dimension", base + "." + key,
              "exclusion key \"" + key + "\" names no parameter dimension");
        continue;
      }
      if (std::find(dim->values.begin(), dim->values.end(), value) ==
          dim->values.end()) {
        error("config.exclude.value-not-in-domain", base + "." + key,
              "exclusion value " + toml::write_scalar(value) +
                  " is not in the declared values of \"" + key + "\"");
      }
    }
  }

  return diags;
}

// -- canonical encoding ------------------------------------------------------

namespace detail {

// Escapes backslash, linefeed and '=' the same way the task encoding does.
inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == '=') out += "\\=";
    else out += c;
  }
  return out;
}

inline std::string encode_pair(const std::string& name, const ParamValue& value) {
  std::string line = escape_field(name);
  line += '=';
  line += value.tag_code();
  line += ':';
  if (value.is_string()) {
    line += escape_field(value.as_string());
  } else {
    line += value.render();
  }
  return line;
}

}  // namespace detail

// One deterministic text rendering of a matrix, hashed into the config
// fingerprint. Dimension order is significant (it fixes the plan order);
// settings and exclusion rules are normalized by sorting.
inline std::string canonical_config_encoding(const ConfigMatrix& config) {
  std::string out = "mxrun-config.v=1";
  for (const auto& dim : config.dimensions) {
    out += "\nd ";
    out += detail::escape_field(dim.name);
    for (const auto& v : dim.values) {
      out += "\nv ";
      out += detail::encode_pair(dim.name, v);
    }
  }
  std::vector<std::string> lines;
  for (const auto& [k, v] : config.settings) {
    lines.push_back("s " + detail::encode_pair(k, v));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) {
    out += '\n';
    out += l;
  }
  lines.clear();
  for (const auto& rule : config.exclusions) {
    std::vector<std::string> pairs;
    for (const auto& [k, v] : rule.predicate) {
      pairs.push_back(detail::encode_pair(k, v));
    }
    std::sort(pairs.begin(), pairs.end());
    std::string line = "x";
    for (const auto& p : pairs) {
      line += ' ';
      line += detail::escape_field(p);
    }
    lines.push_back(std::move(line));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) {
    out += '\n';
    out += l;
  }
  return out;
}

}  // namespace mxrun
