#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

#include "mxrun/diagnostics.hpp"
#include "mxrun/task_key.hpp"
#include "mxrun/version.hpp"

namespace mxrun {

// Content-addressed store of task results. On-disk layout (normative, so
// tools in other languages can read caches):
//
//   <cache-dir>/<hex[0:2]>/<hex[2:64]>/{meta.json, stdout, stderr, result}
//
// meta.json fields: key, status, exit_code, started_ms, finished_ms,
// encoding_version, tool_version, payload_source ("stdout" or "file"),
// stdout_size, stderr_size, result_size.
//
// Entries are staged under <cache-dir>/staging/ and published with one
// atomic rename, so readers only ever see complete entries.

struct CheckpointMeta {
  TaskKey key;
  std::string status;                 // "succeeded" ("failed" when caching failures)
  std::optional<int> exit_code;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  int encoding_version = mxrun::encoding_version;
  std::string tool_version = mxrun::tool_version;
  std::string payload_source;         // "stdout" | "file"
  std::uint64_t stdout_size = 0;
  std::uint64_t stderr_size = 0;
  std::uint64_t result_size = 0;
};

struct CheckpointEntry {
  CheckpointMeta meta;
  std::filesystem::path dir;

  std::filesystem::path stdout_path() const { return dir / "stdout"; }
  std::filesystem::path stderr_path() const { return dir / "stderr"; }
  std::filesystem::path result_path() const { return dir / "result"; }

  std::string read_result() const { return read_file(result_path()); }
  std::string read_stdout() const { return read_file(stdout_path()); }
  std::string read_stderr() const { return read_file(stderr_path()); }

  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw StoreError("cannot read blob " + p.string());
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  }
};

// What the engine hands over for persistence.
struct PendingCheckpoint {
  TaskKey key;
  std::string status = "succeeded";
  std::optional<int> exit_code;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  std::string stdout_data;
  std::string stderr_data;
  std::string result_payload;
  std::string payload_source = "stdout";
};

enum class LookupStatus { hit, absent, corrupt };

class CheckpointStore {
public:
  CheckpointStore() = default;
  CheckpointStore(const CheckpointStore&) = delete;
  CheckpointStore& operator=(const CheckpointStore&) = delete;

  CheckpointStore(CheckpointStore&& other) noexcept { *this = std::move(other); }
  CheckpointStore& operator=(CheckpointStore&& other) noexcept {
    if (this != &other) {
      release_lock();
      root_ = std::move(other.root_);
      lock_fd_ = other.lock_fd_;
      other.lock_fd_ = -1;
      commit_hook = std::move(other.commit_hook);
    }
    return *this;
  }

  ~CheckpointStore() { release_lock(); }

  // Opens (creating if needed) a store. A writing open takes the store
  // lock and garbage-collects staging debris left by dead processes;
  // read-only opens bypass the lock.
  static CheckpointStore open(const std::filesystem::path& root, bool writable = true) {
    CheckpointStore store;
    store.root_ = root;
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw StoreError("cannot create cache dir " + root.string() + ": " +
                             ec.message());
    if (writable) {
      store.acquire_lock();
      std::filesystem::remove_all(root / "staging", ec);
    }
    return store;
  }

  const std::filesystem::path& root() const { return root_; }
  bool writable() const { return lock_fd_ >= 0; }

  static std::filesystem::path entry_dir(const std::filesystem::path& root,
                                         const TaskKey& key) {
    const std::string& h = key.hex();
    return root / h.substr(0, 2) / h.substr(2);
  }

  std::optional<CheckpointEntry> lookup(const TaskKey& key,
                                        LookupStatus* status = nullptr) const {
    auto set_status = [&](LookupStatus s) {
      if (status) *status = s;
    };
    std::filesystem::path dir = entry_dir(root_, key);
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
      set_status(LookupStatus::absent);
      return std::nullopt;
    }

    CheckpointEntry entry;
    entry.dir = dir;
    try {
      std::string meta_text = CheckpointEntry::read_file(dir / "meta.json");
      nlohmann::json j = nlohmann::json::parse(meta_text);
      entry.meta.key = TaskKey(j.at("key").get<std::string>());
      entry.meta.status = j.at("status").get<std::string>();
      if (!j.at("exit_code").is_null()) {
        entry.meta.exit_code = j.at("exit_code").get<int>();
      }
      entry.meta.started_ms = j.at("started_ms").get<std::int64_t>();
      entry.meta.finished_ms = j.at("finished_ms").get<std::int64_t>();
      entry.meta.encoding_version = j.at("encoding_version").get<int>();
      entry.meta.tool_version = j.at("tool_version").get<std::string>();
      entry.meta.payload_source = j.at("payload_source").get<std::string>();
      entry.meta.stdout_size = j.at("stdout_size").get<std::uint64_t>();
      entry.meta.stderr_size = j.at("stderr_size").get<std::uint64_t>();
      entry.meta.result_size = j.at("result_size").get<std::uint64_t>();
    } catch (const std::exception&) {
      set_status(LookupStatus::corrupt);
      return std::nullopt;
    }

    if (entry.meta.key != key || entry.meta.encoding_version != encoding_version) {
      set_status(LookupStatus::corrupt);
      return std::nullopt;
    }
    if (!blob_size_matches(dir / "stdout", entry.meta.stdout_size) ||
        !blob_size_matches(dir / "stderr", entry.meta.stderr_size) ||
        !blob_size_matches(dir / "result", entry.meta.result_size)) {
      set_status(LookupStatus::corrupt);
      return std::nullopt;
    }
    set_status(LookupStatus::hit);
    return entry;
  }

  // Durably commits a result. Blobs and meta go to a staging directory,
  // then one rename publishes the entry. Re-storing an existing key is a
  // no-op. Throws StoreError on I/O failure.
  CheckpointEntry store(const PendingCheckpoint& pending) {
    if (!writable()) throw StoreError("store is opened read-only");
    if (auto existing = lookup(pending.key)) return *existing;

    run_hook(0, "begin");
    std::filesystem::path staging =
        root_ / "staging" /
        (pending.key.hex().substr(0, 16) + "-" + std::to_string(::getpid()) + "-" +
         std::to_string(staging_counter_.fetch_add(1)));
    std::error_code ec;
    std::filesystem::create_directories(staging, ec);
    if (ec) throw StoreError("cannot create staging dir: " + ec.message());

    write_blob(staging / "stdout", pending.stdout_data);
    run_hook(1, "stdout-written");
    write_blob(staging / "stderr", pending.stderr_data);
    run_hook(2, "stderr-written");
    write_blob(staging / "result", pending.result_payload);
    run_hook(3, "result-written");

    nlohmann::json meta = {
        {"key", pending.key.hex()},
        {"status", pending.status},
        {"exit_code", pending.exit_code ? nlohmann::json(*pending.exit_code)
                                        : nlohmann::json(nullptr)},
        {"started_ms", pending.started_ms},
        {"finished_ms", pending.finished_ms},
        {"encoding_version", encoding_version},
        {"tool_version", tool_version},
        {"payload_source", pending.payload_source},
        {"stdout_size", pending.stdout_data.size()},
        {"stderr_size", pending.stderr_data.size()},
        {"result_size", pending.result_payload.size()},
    };
    write_blob(staging / "meta.json",
               meta.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
    run_hook(4, "meta-written");

    std::filesystem::path final_dir = entry_dir(root_, pending.key);
    std::filesystem::create_directories(final_dir.parent_path(), ec);
    if (ec) throw StoreError("cannot create fanout dir: " + ec.message());

    run_hook(5, "pre-publish");
    std::filesystem::rename(staging, final_dir, ec);
    if (ec) {
      // A concurrent writer may have published the same key first; that is
      // the idempotent outcome, anything else is a real failure.
      if (auto existing = lookup(pending.key)) {
        std::filesystem::remove_all(staging, ec);
        return *existing;
      }
      throw StoreError("cannot publish checkpoint entry: " + ec.message());
    }
    run_hook(6, "published");

    CheckpointEntry entry;
    entry.dir = final_dir;
    entry.meta.key = pending.key;
    entry.meta.status = pending.status;
    entry.meta.exit_code = pending.exit_code;
    entry.meta.started_ms = pending.started_ms;
    entry.meta.finished_ms = pending.finished_ms;
    entry.meta.payload_source = pending.payload_source;
    entry.meta.stdout_size = pending.stdout_data.size();
    entry.meta.stderr_size = pending.stderr_data.size();
    entry.meta.result_size = pending.result_payload.size();
    return entry;
  }

  // Removes committed entries. scope_keep == nullptr removes everything;
  // otherwise entries whose key is in *scope_keep survive.
  std::uint64_t purge(const std::set<std::string>* scope_keep = nullptr) {
    if (!writable()) throw StoreError("purge needs the store lock");
    std::uint64_t removed = 0;
    std::error_code ec;
    for (const auto& fanout : std::filesystem::directory_iterator(root_, ec)) {
      if (!fanout.is_directory()) continue;
      std::string prefix = fanout.path().filename().string();
      if (prefix.size() != 2) continue;  // staging/, lock file, ...
      for (const auto& entry : std::filesystem::directory_iterator(fanout.path(), ec)) {
        std::string rest = entry.path().filename().string();
        std::string hex = prefix + rest;
        if (!TaskKey::is_valid_hex(hex)) continue;
        if (scope_keep && scope_keep->count(hex)) continue;
        std::filesystem::remove_all(entry.path(), ec);
        if (!ec) removed++;
      }
      std::filesystem::remove(fanout.path(), ec);  // only succeeds when empty
    }
    return removed;
  }

  std::uint64_t entry_count() const {
    std::uint64_t n = 0;
    std::error_code ec;
    for (const auto& fanout : std::filesystem::directory_iterator(root_, ec)) {
      if (!fanout.is_directory()) continue;
      if (fanout.path().filename().string().size() != 2) continue;
      for (const auto& entry : std::filesystem::directory_iterator(fanout.path(), ec)) {
        std::string hex = fanout.path().filename().string() +
                          entry.path().filename().string();
        if (TaskKey::is_valid_hex(hex)) n++;
      }
    }
    return n;
  }

  // Test instrumentation: called between commit steps so fault-injection
  // suites can kill the process at every point of the sequence.
  std::function<void(int step, std::string_view name)> commit_hook;

private:
  void run_hook(int step, std::string_view name) {
    if (commit_hook) commit_hook(step, name);
  }

  void acquire_lock() {
    std::filesystem::path lock_path = root_ / ".lock";
    int fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd < 0) throw StoreError("cannot open store lock " + lock_path.string());
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd);
      throw StoreError("cache " + root_.string() +
                       " is locked by another process");
    }
    lock_fd_ = fd;
  }

  void release_lock() {
    if (lock_fd_ >= 0) {
      ::close(lock_fd_);
      lock_fd_ = -1;
    }
  }

  static void write_blob(const std::filesystem::path& path, std::string_view data) {
    int fd = ::open(path.c_str(), O_CREAT | O_TRUNC | O_WRONLY | O_CLOEXEC, 0644);
    if (fd < 0) throw StoreError("cannot write " + path.string());
    std::size_t off = 0;
    while (off < data.size()) {
      ssize_t n = ::write(fd, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        int err = errno;
        ::close(fd);
        throw StoreError("write " + path.string() + ": " + std::strerror(err));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
      int err = errno;
      ::close(fd);
      throw StoreError("fsync " + path.string() + ": " + std::strerror(err));
    }
    ::close(fd);
  }

  static bool blob_size_matches(const std::filesystem::path& p, std::uint64_t want) {
    std::error_code ec;
    auto size = std::filesystem::file_size(p, ec);
    return !ec && size == want;
  }

  std::filesystem::path root_;
  int lock_fd_ = -1;
  std::atomic<std::uint64_t> staging_counter_{0};
};

}  // namespace mxrun
