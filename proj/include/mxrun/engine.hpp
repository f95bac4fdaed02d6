#pragma once

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mxrun/checkpoint.hpp"
#include "mxrun/expand.hpp"
#include "mxrun/manifest.hpp"
#include "mxrun/notify.hpp"
#include "mxrun/subprocess.hpp"
#include "mxrun/task_key.hpp"

namespace mxrun {

// How a task is executed: rendered into a shell command, or dispatched to a
// host-registered callback (library embedding and tests).
struct RunnerSpec {
  enum class Kind { command_template, callback };

  Kind kind = Kind::command_template;
  std::string command_template;
  std::optional<std::chrono::milliseconds> timeout;

  // Returns the result payload; a thrown exception marks the task failed.
  using Callback = std::function<std::string(const Assignment&, const NamedValues&)>;
  Callback callback;
};

struct TaskError {
  std::string error_class;  // nonzero-exit | timeout | signal | spawn-error |
                            // callback-error | store-error
  std::string message;
};

enum class TaskStatus { succeeded, failed, restored };

inline const char* to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::succeeded: return "succeeded";
    case TaskStatus::failed: return "failed";
    case TaskStatus::restored: return "restored";
  }
  return "?";
}

struct TaskResult {
  TaskKey key;
  std::uint64_t ordinal = 0;
  TaskStatus status = TaskStatus::failed;
  std::optional<int> exit_code;
  std::string stdout_data;
  std::string stderr_data;
  std::string result_payload;
  std::string payload_source = "stdout";  // "stdout" | "file"
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  std::optional<TaskError> error;
  std::string provenance = "executed";  // "executed" | "cache" | "manifest"
};

struct RunCounts {
  std::uint64_t total = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t failed = 0;
  std::uint64_t restored = 0;
  std::uint64_t skipped = 0;  // undispatched after a fail-fast abort
};

struct RunReport {
  std::string run_id;
  RunCounts counts;
  std::chrono::milliseconds wall_time{0};
  std::vector<TaskResult> results;  // plan order; skipped tasks have no entry
};

struct RunOptions {
  unsigned jobs = default_jobs();
  bool fail_fast = false;
  int retries = 0;           // extra attempts per failing task within one run
  bool cache_failures = false;
  std::string run_id = "run";

  static unsigned default_jobs() {
    unsigned n = std::thread::hardware_concurrency();
    return n ? n : 1;
  }
};

namespace detail {

inline std::int64_t to_epoch_ms(std::chrono::system_clock::time_point tp) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch())
      .count();
}

inline std::string env_name_component(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    } else {
      out += '_';
    }
  }
  return out;
}

}  // namespace detail

// Substitutes {name} placeholders with rendered dimension or setting values;
// "{{" and "}}" emit literal braces. Unknown placeholders throw ConfigError,
// which run() surfaces before any task starts.
inline std::string render_command(const std::string& templ, const Assignment& assignment,
                                  const NamedValues& settings) {
  std::string out;
  out.reserve(templ.size());
  for (std::size_t i = 0; i < templ.size(); i++) {
    char c = templ[i];
    if (c == '{') {
      if (i + 1 < templ.size() && templ[i + 1] == '{') {
        out += '{';
        i++;
        continue;
      }
      std::size_t end = templ.find('}', i + 1);
      if (end == std::string::npos) {
        throw ConfigError("unterminated {placeholder} in command template");
      }
      std::string name = templ.substr(i + 1, end - i - 1);
      const ParamValue* value = assignment.find(name);
      if (!value) {
        for (const auto& [k, v] : settings) {
          if (k == name) {
            value = &v;
            break;
          }
        }
      }
      if (!value) {
        throw ConfigError("command template placeholder {" + name +
                          "} names no parameter or setting");
      }
      out += value->render();
      i = end;
      continue;
    }
    if (c == '}' && i + 1 < templ.size() && templ[i + 1] == '}') {
      out += '}';
      i++;
      continue;
    }
    out += c;
  }
  return out;
}

// Checks every placeholder against the config before a run starts.
inline void validate_command_template(const std::string& templ,
                                      const ConfigMatrix& config) {
  std::vector<ParamValue> probe_values;
  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& d : config.dimensions) {
    names->push_back(d.name);
    probe_values.push_back(d.values.front());
  }
  render_command(templ, Assignment(names, probe_values), config.settings);
}

// Runs one task to completion outside the cache. Errors never escape: they
// are encoded in the returned result.
inline TaskResult execute_task(const Task& task, const NamedValues& settings,
                               const RunnerSpec& runner) {
  TaskResult result;
  result.key = task.key;
  result.ordinal = task.ordinal;

  if (runner.kind == RunnerSpec::Kind::callback) {
    auto started = std::chrono::system_clock::now();
    result.started_ms = detail::to_epoch_ms(started);
    try {
      result.result_payload = runner.callback(task.assignment, settings);
      result.status = TaskStatus::succeeded;
      result.payload_source = "stdout";
    } catch (const std::exception& e) {
      result.status = TaskStatus::failed;
      result.error = TaskError{"callback-error", e.what()};
      result.stderr_data = e.what();
    }
    result.finished_ms = detail::to_epoch_ms(std::chrono::system_clock::now());
    return result;
  }

  CommandSpec spec;
  spec.shell_command = render_command(runner.command_template, task.assignment, settings);
  spec.timeout = runner.timeout;
  spec.env.emplace_back("MXRUN_TASK_KEY", task.key.hex());
  for (std::size_t i = 0; i < task.assignment.size(); i++) {
    spec.env.emplace_back(
        "MXRUN_P_" + detail::env_name_component(task.assignment.name(i)),
        task.assignment.value(i).render());
  }
  for (const auto& [k, v] : settings) {
    spec.env.emplace_back("MXRUN_S_" + detail::env_name_component(k), v.render());
  }

  // If the child writes this file, its bytes become the result payload;
  // otherwise stdout is the payload.
  std::filesystem::path result_file;
  {
    static std::atomic<std::uint64_t> counter{0};
    result_file = std::filesystem::temp_directory_path() /
                  ("mxrun-result-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter.fetch_add(1)));
  }
  spec.env.emplace_back("MXRUN_RESULT_FILE", result_file.string());

  CommandResult cmd = run_shell_command(spec);
  result.started_ms = detail::to_epoch_ms(cmd.started_at);
  result.finished_ms = detail::to_epoch_ms(cmd.finished_at);
  result.stdout_data = std::move(cmd.stdout_data);
  result.stderr_data = std::move(cmd.stderr_data);

  std::error_code ec;
  if (std::filesystem::exists(result_file, ec)) {
    try {
      result.result_payload = CheckpointEntry::read_file(result_file);
      result.payload_source = "file";
    } catch (const std::exception&) {
      result.payload_source = "stdout";
    }
    std::filesystem::remove(result_file, ec);
  }

  if (cmd.spawn_failed) {
    result.status = TaskStatus::failed;
    result.error = TaskError{"spawn-error", cmd.spawn_error};
  } else if (cmd.timed_out) {
    result.status = TaskStatus::failed;
    result.error = TaskError{"timeout", "task exceeded its timeout and was killed"};
  } else if (!cmd.exited) {
    result.status = TaskStatus::failed;
    result.error = TaskError{"signal", "task was terminated by signal " +
                                           std::to_string(cmd.term_signal)};
  } else if (cmd.exit_code != 0) {
    result.status = TaskStatus::failed;
    result.exit_code = cmd.exit_code;
    result.error = TaskError{"nonzero-exit",
                             "command exited with code " + std::to_string(cmd.exit_code)};
  } else {
    result.status = TaskStatus::succeeded;
    result.exit_code = 0;
    if (result.payload_source != "file") result.result_payload = result.stdout_data;
  }
  return result;
}

// Orchestrates a plan on a bounded worker pool. Cache hits and tasks the
// prior manifest already completed are restored without execution; every
// success is persisted to the store before its manifest record is appended
// (persist-before-complete). All manifest appends and notification events
// funnel through one coordinator mutex, so sinks see a totally ordered
// stream with run-started first and run-completed last.
inline RunReport run_plan(const TaskPlan& plan, const RunnerSpec& runner,
                          const RunOptions& options, CheckpointStore& store,
                          ManifestWriter& manifest,
                          const std::vector<std::unique_ptr<NotificationSink>>& sinks,
                          const RunManifest* prior = nullptr) {
  if (plan.tasks.empty()) throw EngineError("cannot run an empty plan");
  if (options.jobs < 1) throw EngineError("jobs must be >= 1");
  if (!store.writable()) throw EngineError("checkpoint store is not writable");

  const auto wall_start = std::chrono::steady_clock::now();
  RunReport report;
  report.run_id = options.run_id;
  report.counts.total = plan.tasks.size();
  report.results.resize(plan.tasks.size());
  std::vector<char> has_result(plan.tasks.size(), 0);

  std::map<std::string, const TaskRecord*> prior_records;
  if (prior) prior_records = prior->fold();

  std::mutex coordinator;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto snapshot_counts = [&]() {
    EventCounts c;
    c.total = report.counts.total;
    c.succeeded = report.counts.succeeded;
    c.failed = report.counts.failed;
    c.restored = report.counts.restored;
    c.pending = c.total - c.succeeded - c.failed - c.restored;
    return c;
  };

  {
    std::lock_guard lock(coordinator);
    NotificationEvent started;
    started.kind = EventKind::run_started;
    started.run_id = options.run_id;
    started.counts = snapshot_counts();
    started.timestamp = std::chrono::system_clock::now();
    emit_event(sinks, started);
  }

  // Terminal bookkeeping for one task. Called with the coordinator held.
  auto finish_task = [&](std::size_t index, TaskResult&& result, bool append_record) {
    const Task& task = plan.tasks[index];
    if (append_record) {
      TaskRecord record;
      record.key_hex = task.key.hex();
      record.ordinal = task.ordinal;
      record.params = task.assignment.items();
      record.status = to_string(result.status);
      record.exit_code = result.exit_code;
      record.error_class = result.error ? result.error->error_class : "";
      record.started_ms = result.started_ms;
      record.finished_ms = result.finished_ms;
      record.provenance = result.provenance;
      manifest.append(record);
    }
    switch (result.status) {
      case TaskStatus::succeeded: report.counts.succeeded++; break;
      case TaskStatus::failed: report.counts.failed++; break;
      case TaskStatus::restored: report.counts.restored++; break;
    }
    if (result.status == TaskStatus::failed) {
      NotificationEvent failed;
      failed.kind = EventKind::task_failed;
      failed.run_id = options.run_id;
      failed.counts = snapshot_counts();
      failed.timestamp = std::chrono::system_clock::now();
      failed.task_key = task.key.hex();
      failed.error_class = result.error ? result.error->error_class : "unknown";
      emit_event(sinks, failed);
      if (options.fail_fast) stop.store(true);
    }
    has_result[index] = 1;
    report.results[index] = std::move(result);
  };

  auto worker = [&]() {
    for (;;) {
      if (stop.load()) return;
      std::size_t index = next.fetch_add(1);
      if (index >= plan.tasks.size()) return;
      const Task& task = plan.tasks[index];

      // Restored via the prior manifest: no execution, no new record.
      if (prior) {
        auto it = prior_records.find(task.key.hex());
        if (it != prior_records.end() && it->second->completed()) {
          TaskResult restored;
          restored.key = task.key;
          restored.ordinal = task.ordinal;
          restored.status = TaskStatus::restored;
          restored.provenance = "manifest";
          restored.exit_code = it->second->exit_code;
          auto now = detail::to_epoch_ms(std::chrono::system_clock::now());
          restored.started_ms = restored.finished_ms = now;
          if (auto entry = store.lookup(task.key)) {
            restored.result_payload = entry->read_result();
            restored.payload_source = entry->meta.payload_source;
          }
          std::lock_guard lock(coordinator);
          finish_task(index, std::move(restored), /*append_record=*/false);
          continue;
        }
      }

      // Restored from the content-addressed cache (possibly written by an
      // earlier or concurrent-to-crash run with a different run id).
      if (auto entry = store.lookup(task.key); entry && entry->meta.status == "succeeded") {
        TaskResult restored;
        restored.key = task.key;
        restored.ordinal = task.ordinal;
        restored.status = TaskStatus::restored;
        restored.provenance = "cache";
        restored.exit_code = entry->meta.exit_code;
        auto now = detail::to_epoch_ms(std::chrono::system_clock::now());
        restored.started_ms = restored.finished_ms = now;
        restored.result_payload = entry->read_result();
        restored.payload_source = entry->meta.payload_source;
        std::lock_guard lock(coordinator);
        finish_task(index, std::move(restored), /*append_record=*/true);
        continue;
      }

      TaskResult result = execute_task(task, plan.settings, runner);
      for (int attempt = 0; attempt < options.retries &&
                            result.status == TaskStatus::failed && !stop.load();
           attempt++) {
        result = execute_task(task, plan.settings, runner);
      }

      if (result.status == TaskStatus::succeeded ||
          (options.cache_failures && result.status == TaskStatus::failed)) {
        PendingCheckpoint pending;
        pending.key = task.key;
        pending.status = to_string(result.status);
        pending.exit_code = result.exit_code;
        pending.started_ms = result.started_ms;
        pending.finished_ms = result.finished_ms;
        pending.stdout_data = result.stdout_data;
        pending.stderr_data = result.stderr_data;
        pending.result_payload = result.result_payload;
        pending.payload_source = result.payload_source;
        try {
          store.store(pending);
        } catch (const std::exception& e) {
          // A result that was not persisted must not be reported succeeded.
          result.status = TaskStatus::failed;
          result.error = TaskError{"store-error", e.what()};
        }
      }

      std::lock_guard lock(coordinator);
      finish_task(index, std::move(result), /*append_record=*/true);
    }
  };

  std::vector<std::thread> pool;
  const unsigned jobs = static_cast<unsigned>(
      std::min<std::uint64_t>(options.jobs, plan.tasks.size()));
  pool.reserve(jobs);
  for (unsigned i = 0; i < jobs; i++) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (char present : has_result) {
    if (!present) report.counts.skipped++;
  }

  {
    std::lock_guard lock(coordinator);
    NotificationEvent completed;
    completed.kind = EventKind::run_completed;
    completed.run_id = options.run_id;
    completed.counts = snapshot_counts();
    completed.timestamp = std::chrono::system_clock::now();
    emit_event(sinks, completed);
  }

  report.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - wall_start);
  return report;
}

// Resume entry point: refuses to mix a manifest with a plan it does not
// describe, then runs with the manifest's completions treated as restored.
inline RunReport resume_plan(const RunManifest& prior, const TaskPlan& plan,
                             const RunnerSpec& runner, const RunOptions& options,
                             CheckpointStore& store, ManifestWriter& manifest,
                             const std::vector<std::unique_ptr<NotificationSink>>& sinks) {
  if (prior.config_fingerprint != plan.config_fingerprint) {
    throw EngineError(
        "manifest fingerprint does not match this config: the configuration "
        "changed since the run started (task keys differ); use a fresh run id");
  }
  return run_plan(plan, runner, options, store, manifest, sinks, &prior);
}

}  // namespace mxrun
