#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mxrun {

enum class Severity { error, warning };

// One validation finding. `code` is stable across releases so scripts can
// match on it; `path` points at the offending config element
// (e.g. "exclude[0].datasett").
struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;
  std::string path;
  std::string message;

  std::string to_string() const {
    std::string s(severity == Severity::error ? "error" : "warning");
    s += ": ";
    s += code;
    if (!path.empty()) {
      s += ": ";
      s += path;
    }
    s += ": ";
    s += message;
    return s;
  }
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::error) return true;
  }
  return false;
}

// Structural config failure: syntax errors and schema violations that make
// the file unusable. line/col are 1-based; 0 means "no position".
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string message, int line = 0, int col = 0)
      : std::runtime_error(std::move(message)), line_(line), col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

private:
  int line_;
  int col_;
};

class StoreError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ManifestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class EngineError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mxrun
