#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mxrun/config.hpp"
#include "mxrun/hash.hpp"
#include "mxrun/value.hpp"

namespace mxrun {

// Collision-resistant identity of a task's inputs: the SHA-256 of the
// canonical encoding, rendered as 64 lowercase hex characters. The key is
// the cache address, so it must be stable across processes, machines and
// releases within one encoding version.
class TaskKey {
public:
  TaskKey() = default;

  explicit TaskKey(std::string hex) : hex_(std::move(hex)) {
    if (!is_valid_hex(hex_)) {
      throw std::invalid_argument("task key must be 64 lowercase hex characters");
    }
  }

  static TaskKey from_digest(const std::array<unsigned char, 32>& digest) {
    TaskKey k;
    k.hex_ = to_hex(digest);
    return k;
  }

  static bool is_valid_hex(std::string_view s) {
    if (s.size() != 64) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
  }

  const std::string& hex() const { return hex_; }
  bool empty() const { return hex_.empty(); }

  auto operator<=>(const TaskKey&) const = default;

private:
  std::string hex_;
};

using NamedValues = std::vector<std::pair<std::string, ParamValue>>;

// Canonical task encoding, version 1. UTF-8 text: a version line "v=1",
// then one line per entry "name=<tag>:<value>", assignment entries first
// and settings after, each block sorted bytewise by name, lines joined by
// a single linefeed with no trailing newline. Tags are s/i/f/b/n; strings
// (and names) escape backslash, linefeed and '=' with a backslash.
inline std::string canonical_encode(const NamedValues& assignment,
                                    const NamedValues& settings) {
  auto block = [](NamedValues entries) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [name, value] : entries) {
      out += '\n';
      out += detail::encode_pair(name, value);
    }
    return out;
  };
  return "v=1" + block(assignment) + block(settings);
}

inline TaskKey task_key(const NamedValues& assignment, const NamedValues& settings) {
  return TaskKey::from_digest(sha256(canonical_encode(assignment, settings)));
}

inline std::string config_fingerprint(const ConfigMatrix& config) {
  return sha256_hex(canonical_config_encoding(config));
}

}  // namespace mxrun
