#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "mxrun/mxrun.hpp"

namespace fs = std::filesystem;
using namespace mxrun;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_task_failures = 1;
constexpr int exit_config_error = 2;

bool use_color() {
  return ::isatty(STDOUT_FILENO) && std::getenv("NO_COLOR") == nullptr;
}

std::string paint(const std::string& text, const char* code) {
  if (!use_color()) return text;
  return std::string("\033[") + code + "m" + text + "\033[0m";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

[[noreturn]] void die_config(const fs::path& file, const ConfigError& e) {
  std::cerr << "mxrun: error: " << file.string();
  if (e.line() > 0) std::cerr << ":" << e.line() << ":" << e.col();
  std::cerr << ": " << e.what() << "\n";
  std::exit(exit_config_error);
}

struct LoadedConfig {
  ConfigFile file;
  TaskPlan plan;
};

// Parse + validate + expand, printing diagnostics and exiting on errors.
LoadedConfig load_and_expand(const fs::path& path, bool print_warnings = true) {
  LoadedConfig loaded;
  try {
    loaded.file = parse_config(read_file(path));
  } catch (const ConfigError& e) {
    die_config(path, e);
  }
  std::vector<Diagnostic> diags = validate(loaded.file.matrix);
  for (const auto& d : diags) {
    if (d.severity == Severity::error || print_warnings) {
      std::cerr << "mxrun: " << d.to_string() << "\n";
    }
  }
  if (has_errors(diags)) std::exit(exit_config_error);
  try {
    loaded.plan = expand(loaded.file.matrix);
  } catch (const std::exception& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    std::exit(exit_config_error);
  }
  return loaded;
}

fs::path resolve_cache_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MXRUN_CACHE_DIR"); env && *env) return env;
  return fs::path(".mxrun") / "cache";
}

fs::path runs_dir() { return fs::path(".mxrun") / "runs"; }

std::string render_assignment(const Assignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); i++) {
    if (i) out += ' ';
    out += a.name(i);
    out += '=';
    out += a.value(i).render();
  }
  return out;
}

std::string fresh_run_id(const std::string& fingerprint) {
  auto now_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();
  return "r" + fingerprint.substr(0, 6) + "-" + std::to_string(now_ms) + "-" +
         std::to_string(::getpid());
}

void write_text_file(const fs::path& path, const std::string& data) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

int cmd_validate(const fs::path& config_path) {
  ConfigFile file;
  try {
    file = parse_config(read_file(config_path));
  } catch (const ConfigError& e) {
    die_config(config_path, e);
  }
  std::vector<Diagnostic> diags = validate(file.matrix);
  for (const auto& d : diags) std::cout << d.to_string() << "\n";
  if (has_errors(diags)) {
    std::cout << paint("invalid", "31") << ": " << diags.size() << " finding(s)\n";
    return exit_config_error;
  }
  TaskCounts counts = count_tasks(file.matrix);
  std::cout << paint("ok", "32") << ": " << file.matrix.dimensions.size()
            << " dimension(s), " << counts.total << " combination(s), "
            << counts.excluded << " excluded\n";
  return exit_ok;
}

int cmd_expand(const fs::path& config_path) {
  LoadedConfig loaded = load_and_expand(config_path);
  for (const auto& task : loaded.plan.tasks) {
    std::cout << task.key.hex() << "  " << render_assignment(task.assignment) << "\n";
  }
  return exit_ok;
}

struct RunFlags {
  std::string config_path;
  unsigned jobs = RunOptions::default_jobs();
  std::string cache_dir;
  std::vector<std::string> notify;
  bool fail_fast = false;
  std::string run_id;
  bool fresh = false;
  std::string out_path;
  std::string format = "csv";
  std::string command_override;
  long long timeout_ms = 0;
  int retries = 0;
  bool cache_failures = false;
};

int cmd_run(const RunFlags& flags) {
  LoadedConfig loaded = load_and_expand(flags.config_path);
  const TaskPlan& plan = loaded.plan;

  RunnerSpec runner;
  runner.kind = RunnerSpec::Kind::command_template;
  if (!flags.command_override.empty()) {
    runner.command_template = flags.command_override;
  } else if (loaded.file.runner) {
    runner.command_template = loaded.file.runner->command;
    runner.timeout = loaded.file.runner->timeout;
  } else {
    std::cerr << "mxrun: error: no runner command (add a [runner] table to the "
                 "config or pass --command)\n";
    return exit_config_error;
  }
  if (flags.timeout_ms > 0) {
    runner.timeout = std::chrono::milliseconds(flags.timeout_ms);
  }
  try {
    validate_command_template(runner.command_template, loaded.file.matrix);
  } catch (const ConfigError& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }

  RunOptions options;
  options.jobs = flags.jobs ? flags.jobs : RunOptions::default_jobs();
  options.fail_fast = flags.fail_fast;
  options.retries = flags.retries;
  options.cache_failures = flags.cache_failures;
  if (!flags.run_id.empty()) {
    options.run_id = flags.run_id;
  } else if (flags.fresh) {
    options.run_id = fresh_run_id(plan.config_fingerprint);
  } else {
    options.run_id = "r" + plan.config_fingerprint.substr(0, 12);
  }

  std::vector<std::unique_ptr<NotificationSink>> sinks;
  try {
    if (flags.notify.empty()) {
      sinks.push_back(std::make_unique<ConsoleSink>());
    } else {
      for (const auto& spec : flags.notify) sinks.push_back(make_sink(spec));
    }
  } catch (const ConfigError& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }

  const fs::path manifest_path = runs_dir() / (options.run_id + ".manifest");
  CheckpointStore store;
  try {
    store = CheckpointStore::open(resolve_cache_dir(flags.cache_dir), true);
  } catch (const StoreError& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }

  RunReport report;
  try {
    if (fs::exists(manifest_path)) {
      ManifestLoad prior = load_manifest(manifest_path);
      for (const auto& w : prior.warnings) {
        std::cerr << "mxrun: warning: " << manifest_path.string() << ": " << w << "\n";
      }
      ManifestWriter writer = ManifestWriter::append_to(manifest_path, prior.manifest);
      report = resume_plan(prior.manifest, plan, runner, options, store, writer, sinks);
    } else {
      RunManifest header;
      header.run_id = options.run_id;
      header.config_fingerprint = plan.config_fingerprint;
      header.created_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
      header.plan.dimensions = plan.dimensions;
      header.plan.task_count = plan.tasks.size();
      header.plan.excluded_count = plan.excluded_count;
      ManifestWriter writer = ManifestWriter::create(manifest_path, header);
      report = run_plan(plan, runner, options, store, writer, sinks);
    }
  } catch (const std::exception& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }

  // Export via the very same path `report` uses, so bytes always agree.
  fs::path out_path = flags.out_path.empty()
                          ? runs_dir() / (options.run_id +
                                          (flags.format == "csv" ? ".csv" : ".jsonl"))
                          : fs::path(flags.out_path);
  try {
    ManifestLoad final_state = load_manifest(manifest_path);
    ExportOutcome exported = export_results(
        final_state.manifest, &store,
        flags.format == "csv" ? ExportFormat::csv : ExportFormat::json_lines);
    write_text_file(out_path, exported.data);
  } catch (const std::exception& e) {
    std::cerr << "mxrun: warning: result export failed: " << e.what() << "\n";
  }

  std::cout << "summary: " << report.counts.succeeded << " succeeded, "
            << report.counts.failed << " failed, " << report.counts.restored
            << " restored, " << report.counts.skipped << " skipped, "
            << report.counts.total << " total\n";
  std::cout << "wall time: " << (report.wall_time.count() / 1000.0) << " s\n";
  std::cout << "manifest: " << manifest_path.string() << "\n";
  std::cout << "results: " << out_path.string() << "\n";
  if (report.counts.failed > 0 || report.counts.skipped > 0) {
    std::cout << paint("run failed", "31") << "\n";
    return exit_task_failures;
  }
  std::cout << paint("run complete", "32") << "\n";
  return exit_ok;
}

int cmd_report(const std::string& manifest_flag, const std::string& run_id,
               const std::string& cache_dir, const std::string& format,
               const std::string& out_path) {
  fs::path manifest_path;
  if (!manifest_flag.empty()) {
    manifest_path = manifest_flag;
  } else if (!run_id.empty()) {
    manifest_path = runs_dir() / (run_id + ".manifest");
  } else {
    std::cerr << "mxrun: error: report needs --manifest or --run-id\n";
    return exit_config_error;
  }

  ManifestLoad loaded;
  try {
    loaded = load_manifest(manifest_path);
  } catch (const ManifestError& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }
  for (const auto& w : loaded.warnings) {
    std::cerr << "mxrun: warning: " << manifest_path.string() << ": " << w << "\n";
  }

  fs::path cache = resolve_cache_dir(cache_dir);
  std::optional<CheckpointStore> store;
  if (fs::is_directory(cache)) {
    store.emplace(CheckpointStore::open(cache, /*writable=*/false));
  }

  ExportOutcome exported =
      export_results(loaded.manifest, store ? &*store : nullptr,
                     format == "csv" ? ExportFormat::csv : ExportFormat::json_lines);
  try {
    if (out_path.empty()) {
      std::cout << exported.data;
    } else {
      write_text_file(out_path, exported.data);
    }
  } catch (const std::exception& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }
  if (exported.degraded) {
    std::cerr << "mxrun: warning: some succeeded tasks have no checkpoint entry "
                 "(payload-missing)\n";
    return exit_task_failures;
  }
  return exit_ok;
}

int cmd_clean(const std::string& cache_dir, bool all, const std::string& keep_config) {
  if (all == keep_config.empty()) {
    // exactly one scope must be chosen
    std::cerr << "mxrun: error: clean needs exactly one of --all or --keep CONFIG\n";
    return exit_config_error;
  }
  CheckpointStore store;
  try {
    store = CheckpointStore::open(resolve_cache_dir(cache_dir), true);
  } catch (const StoreError& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }
  std::uint64_t removed = 0;
  if (all) {
    removed = store.purge(nullptr);
  } else {
    LoadedConfig loaded = load_and_expand(keep_config);
    std::set<std::string> keep;
    for (const auto& task : loaded.plan.tasks) keep.insert(task.key.hex());
    removed = store.purge(&keep);
  }
  std::cout << "removed " << removed << " entries\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mxrun: run a declarative experiment matrix with caching, "
               "crash-safe resumption and notifications"};
  app.require_subcommand(1);

  std::string config_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a config file");
  validate_cmd->add_option("config", config_path, "config file")->required();

  auto* expand_cmd = app.add_subcommand("expand", "print the expanded task plan");
  expand_cmd->add_option("config", config_path, "config file")->required();

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "execute the full pipeline");
  run_cmd->add_option("config", run_flags.config_path, "config file")->required();
  run_cmd->add_option("--jobs,-j", run_flags.jobs, "worker count (default: logical CPUs)");
  run_cmd->add_option("--cache-dir", run_flags.cache_dir,
                      "checkpoint store root (default: $MXRUN_CACHE_DIR or .mxrun/cache)");
  run_cmd->add_option("--notify", run_flags.notify,
                      "console | file:<path> | webhook:<url> (repeatable)");
  run_cmd->add_flag("--fail-fast", run_flags.fail_fast,
                    "stop dispatching new tasks after the first failure");
  run_cmd->add_option("--run-id", run_flags.run_id, "run identifier (default: derived "
                      "from the config fingerprint; matching manifests resume)");
  run_cmd->add_flag("--fresh", run_flags.fresh, "force a new run id");
  run_cmd->add_option("--out", run_flags.out_path, "result export path");
  run_cmd->add_option("--format", run_flags.format, "csv | json-lines")
      ->check(CLI::IsMember({"csv", "json-lines"}));
  run_cmd->add_option("--command", run_flags.command_override,
                      "override the [runner] command template");
  run_cmd->add_option("--timeout-ms", run_flags.timeout_ms,
                      "per-task timeout in milliseconds");
  run_cmd->add_option("--retries", run_flags.retries,
                      "extra attempts per failing task (default 0)");
  run_cmd->add_flag("--cache-failures", run_flags.cache_failures,
                    "checkpoint failed results too (forensics)");

  std::string manifest_flag, report_run_id, report_cache_dir, report_format = "csv",
              report_out;
  auto* report_cmd = app.add_subcommand("report", "re-export results from a manifest");
  report_cmd->add_option("--manifest", manifest_flag, "manifest path");
  report_cmd->add_option("--run-id", report_run_id, "run id under .mxrun/runs");
  report_cmd->add_option("--cache-dir", report_cache_dir, "checkpoint store root");
  report_cmd->add_option("--format", report_format, "csv | json-lines")
      ->check(CLI::IsMember({"csv", "json-lines"}));
  report_cmd->add_option("--out", report_out, "output path (default: stdout)");

  std::string clean_cache_dir, clean_keep;
  bool clean_all = false;
  auto* clean_cmd = app.add_subcommand("clean", "purge checkpoint entries");
  clean_cmd->add_option("--cache-dir", clean_cache_dir, "checkpoint store root");
  clean_cmd->add_flag("--all", clean_all, "remove every entry");
  clean_cmd->add_option("--keep", clean_keep,
                        "config file; entries outside its plan are removed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config_error;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(config_path);
    if (expand_cmd->parsed()) return cmd_expand(config_path);
    if (run_cmd->parsed()) return cmd_run(run_flags);
    if (report_cmd->parsed()) {
      return cmd_report(manifest_flag, report_run_id, report_cache_dir, report_format,
                        report_out);
    }
    if (clean_cmd->parsed()) {
      return cmd_clean(clean_cache_dir, clean_all, clean_keep);
    }
  } catch (const std::exception& e) {
    std::cerr << "mxrun: error: " << e.what() << "\n";
    return exit_config_error;
  }
  return exit_config_error;
}
