#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "mxrun/diagnostics.hpp"
#include "mxrun/expand.hpp"
#include "mxrun/value.hpp"

namespace mxrun {

// The manifest is line-delimited JSON: a header line carrying run identity
// and the plan summary, then one record per terminal task event, flushed to
// disk before the engine considers the task complete. Crashes can only tear
// the final line, which the loader drops with a warning.

struct PlanSummary {
  std::vector<PlanDimension> dimensions;
  std::uint64_t task_count = 0;
  std::uint64_t excluded_count = 0;
};

struct TaskRecord {
  std::string key_hex;
  std::uint64_t ordinal = 0;
  NamedValues params;
  std::string status;  // "succeeded" | "failed" | "restored"
  std::optional<int> exit_code;
  std::string error_class;  // empty when none
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  std::string provenance;  // "executed" | "cache" | "manifest"

  bool completed() const { return status == "succeeded" || status == "restored"; }
};

struct RunManifest {
  std::string run_id;
  std::string config_fingerprint;
  std::int64_t created_ms = 0;
  PlanSummary plan;
  std::vector<TaskRecord> records;  // file order (completion order)

  // Effective terminal record per key: the last one wins, so a failure
  // followed by a successful rerun reads as succeeded.
  std::map<std::string, const TaskRecord*> fold() const {
    std::map<std::string, const TaskRecord*> folded;
    for (const auto& r : records) folded[r.key_hex] = &r;
    return folded;
  }
};

struct ManifestLoad {
  RunManifest manifest;
  std::vector<std::string> warnings;
};

namespace detail {

inline nlohmann::json record_to_json(const TaskRecord& r) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : r.params) params[k] = v.to_json();
  return nlohmann::json{
      {"key", r.key_hex},
      {"ordinal", r.ordinal},
      {"params", std::move(params)},
      {"status", r.status},
      {"exit_code", r.exit_code ? nlohmann::json(*r.exit_code) : nlohmann::json(nullptr)},
      {"error_class", r.error_class.empty() ? nlohmann::json(nullptr)
                                            : nlohmann::json(r.error_class)},
      {"started_ms", r.started_ms},
      {"finished_ms", r.finished_ms},
      {"provenance", r.provenance},
  };
}

inline TaskRecord record_from_json(const nlohmann::json& j) {
  TaskRecord r;
  r.key_hex = j.at("key").get<std::string>();
  r.ordinal = j.at("ordinal").get<std::uint64_t>();
  for (const auto& [k, v] : j.at("params").items()) {
    r.params.emplace_back(k, ParamValue::from_json(v));
  }
  r.status = j.at("status").get<std::string>();
  if (!j.at("exit_code").is_null()) r.exit_code = j.at("exit_code").get<int>();
  if (!j.at("error_class").is_null()) {
    r.error_class = j.at("error_class").get<std::string>();
  }
  r.started_ms = j.at("started_ms").get<std::int64_t>();
  r.finished_ms = j.at("finished_ms").get<std::int64_t>();
  r.provenance = j.at("provenance").get<std::string>();
  if (r.status != "succeeded" && r.status != "failed" && r.status != "restored") {
    throw ManifestError("unknown record status \"" + r.status + "\"");
  }
  return r;
}

inline nlohmann::json header_to_json(const RunManifest& m) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : m.plan.dimensions) {
    dims.push_back({{"name", d.name}, {"size", d.size}});
  }
  return nlohmann::json{
      {"mxrun_manifest", 1},
      {"run_id", m.run_id},
      {"config_fingerprint", m.config_fingerprint},
      {"created_ms", m.created_ms},
      {"plan",
       {{"dimensions", std::move(dims)},
        {"task_count", m.plan.task_count},
        {"excluded_count", m.plan.excluded_count}}},
  };
}

}  // namespace detail

// Loads a manifest. A trailing torn record (crash mid-append) is dropped
// with a warning; an unreadable header or duplicate completion records are
// errors because resuming on top of them would not be safe.
inline ManifestLoad load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  ManifestLoad load;
  std::size_t pos = 0;
  bool have_header = false;
  std::set<std::string> completed;

  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      load.warnings.push_back("dropped torn trailing record (" +
                              std::to_string(text.size() - pos) + " bytes)");
      break;
    }
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;

    if (!have_header) {
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("mxrun_manifest") ||
          !j.contains("run_id") || !j.contains("config_fingerprint")) {
        throw ManifestError("manifest " + path.string() +
                            " has an unreadable header line");
      }
      load.manifest.run_id = j.at("run_id").get<std::string>();
      load.manifest.config_fingerprint = j.at("config_fingerprint").get<std::string>();
      load.manifest.created_ms = j.value("created_ms", std::int64_t{0});
      if (j.contains("plan")) {
        const auto& plan = j.at("plan");
        for (const auto& d : plan.at("dimensions")) {
          load.manifest.plan.dimensions.push_back(
              PlanDimension{d.at("name").get<std::string>(),
                            d.at("size").get<std::uint64_t>()});
        }
        load.manifest.plan.task_count = plan.at("task_count").get<std::uint64_t>();
        load.manifest.plan.excluded_count =
            plan.at("excluded_count").get<std::uint64_t>();
      }
      have_header = true;
      continue;
    }

    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ManifestError("manifest " + path.string() +
                          " has a corrupt record before the final line");
    }
    TaskRecord record;
    try {
      record = detail::record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError("manifest " + path.string() + " has a malformed record: " +
                          e.what());
    }
    if (completed.count(record.key_hex)) {
      throw ManifestError("manifest " + path.string() +
                          " records task " + record.key_hex + " after completion");
    }
    if (record.completed()) completed.insert(record.key_hex);
    load.manifest.records.push_back(std::move(record));
  }

  if (!have_header) {
    throw ManifestError("manifest " + path.string() + " has no header line");
  }
  return load;
}

// Append-only writer. Not thread-safe: the engine funnels every append
// through a single coordinator. Each record is written and fsynced before
// append() returns, so a record the engine saw committed survives a crash.
class ManifestWriter {
public:
  ManifestWriter(const ManifestWriter&) = delete;
  ManifestWriter& operator=(const ManifestWriter&) = delete;
  ManifestWriter(ManifestWriter&& other) noexcept { *this = std::move(other); }
  ManifestWriter& operator=(ManifestWriter&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.fd_;
      other.fd_ = -1;
      path_ = std::move(other.path_);
      completed_ = std::move(other.completed_);
    }
    return *this;
  }
  ~ManifestWriter() { close(); }

  // Starts a new manifest with a header line.
  static ManifestWriter create(const std::filesystem::path& path, const RunManifest& m) {
    std::error_code ec;
    if (path.has_parent_path()) {
      std::filesystem::create_directories(path.parent_path(), ec);
    }
    ManifestWriter w(path, O_CREAT | O_EXCL | O_WRONLY);
    w.write_line(detail::header_to_json(m).dump(
        -1, ' ', false, nlohmann::json::error_handler_t::replace));
    return w;
  }

  // Reopens an existing manifest for appending; `loaded` must be the result
  // of load_manifest() on the same path.
  static ManifestWriter append_to(const std::filesystem::path& path,
                                  const RunManifest& loaded) {
    ManifestWriter w(path, O_WRONLY | O_APPEND);
    for (const auto& [key, record] : loaded.fold()) {
      if (record->completed()) w.completed_.insert(key);
    }
    // A torn tail would corrupt the next record; cut it off first.
    std::uintmax_t keep = 0;
    {
      std::ifstream in(path, std::ios::binary);
      std::string text{std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>()};
      std::size_t last_nl = text.rfind('\n');
      keep = (last_nl == std::string::npos) ? 0 : last_nl + 1;
      if (keep != text.size()) {
        if (::ftruncate(w.fd_, static_cast<off_t>(keep)) != 0) {
          throw ManifestError("cannot trim torn manifest tail");
        }
      }
    }
    return w;
  }

  // Durably appends one terminal record. Rejects a second record for a key
  // that already completed; a failed record may be superseded by a rerun.
  void append(const TaskRecord& record) {
    if (completed_.count(record.key_hex)) {
      throw ManifestError("task " + record.key_hex +
                          " already has a completed record");
    }
    write_line(detail::record_to_json(record).dump(
        -1, ' ', false, nlohmann::json::error_handler_t::replace));
    if (record.completed()) completed_.insert(record.key_hex);
  }

  const std::filesystem::path& path() const { return path_; }

private:
  ManifestWriter(const std::filesystem::path& path, int flags) : path_(path) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw ManifestError("cannot open manifest " + path.string() + ": " +
                          std::strerror(errno));
    }
  }

  void write_line(std::string line) {
    line += '\n';
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ManifestError(std::string("manifest write failed: ") +
                            std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) {
      throw ManifestError(std::string("manifest fsync failed: ") +
                          std::strerror(errno));
    }
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int fd_ = -1;
  std::filesystem::path path_;
  std::set<std::string> completed_;
};

}  // namespace mxrun
