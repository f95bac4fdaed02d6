#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mxrun/diagnostics.hpp"

namespace mxrun {

enum class EventKind { run_started, task_failed, run_completed };

inline const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::run_started: return "run-started";
    case EventKind::task_failed: return "task-failed";
    case EventKind::run_completed: return "run-completed";
  }
  return "?";
}

struct EventCounts {
  std::uint64_t total = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t failed = 0;
  std::uint64_t restored = 0;
  std::uint64_t pending = 0;
};

struct NotificationEvent {
  EventKind kind = EventKind::run_started;
  std::string run_id;
  EventCounts counts;
  std::chrono::system_clock::time_point timestamp;
  std::optional<std::string> task_key;     // task-failed only
  std::optional<std::string> error_class;  // task-failed only
};

enum class DeliveryStatus { delivered, failed_delivery };

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Structured body shared by the file sink and the webhook sink.
inline nlohmann::json event_to_json(const NotificationEvent& e) {
  nlohmann::json j{
      {"run_id", e.run_id},
      {"kind", to_string(e.kind)},
      {"total", e.counts.total},
      {"succeeded", e.counts.succeeded},
      {"failed", e.counts.failed},
      {"restored", e.counts.restored},
      {"pending", e.counts.pending},
      {"timestamp", iso8601_utc(e.timestamp)},
  };
  if (e.task_key) j["task_key"] = *e.task_key;
  if (e.error_class) j["error_class"] = *e.error_class;
  return j;
}

class NotificationSink {
public:
  virtual ~NotificationSink() = default;
  virtual std::string name() const = 0;
  virtual DeliveryStatus notify(const NotificationEvent& event) = 0;
};

class ConsoleSink : public NotificationSink {
public:
  explicit ConsoleSink(std::ostream& out = std::cerr) : out_(&out) {}

  std::string name() const override { return "console"; }

  DeliveryStatus notify(const NotificationEvent& e) override {
    std::string line = "run " + e.run_id;
    switch (e.kind) {
      case EventKind::run_started:
        line += " started: " + std::to_string(e.counts.total) + " tasks";
        break;
      case EventKind::task_failed:
        line += " task failed: " + e.task_key.value_or("?") + " (" +
                e.error_class.value_or("?") + ")";
        break;
      case EventKind::run_completed:
        line += " completed: " + std::to_string(e.counts.succeeded) + " succeeded, " +
                std::to_string(e.counts.failed) + " failed, " +
                std::to_string(e.counts.restored) + " restored (" +
                std::to_string(e.counts.total) + " total)";
        break;
    }
    (*out_) << line << std::endl;
    return DeliveryStatus::delivered;
  }

private:
  std::ostream* out_;
};

class FileSink : public NotificationSink {
public:
  explicit FileSink(std::filesystem::path path) : path_(std::move(path)) {
    std::error_code ec;
    if (path_.has_parent_path()) {
      std::filesystem::create_directories(path_.parent_path(), ec);
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw ConfigError("cannot open notification file " + path_.string());
  }

  std::string name() const override { return "file:" + path_.string(); }

  DeliveryStatus notify(const NotificationEvent& e) override {
    out_ << event_to_json(e).dump() << '\n';
    out_.flush();
    return out_ ? DeliveryStatus::delivered : DeliveryStatus::failed_delivery;
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

// POSTs each event as JSON; any 2xx answer counts as delivered, with one
// bounded retry so a flaky endpoint cannot stall run teardown.
class WebhookSink : public NotificationSink {
public:
  explicit WebhookSink(const std::string& url) : url_(url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw ConfigError("webhook url must start with http:// or https://");
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_ = url;
      path_ = "/";
    } else {
      base_ = url.substr(0, path_start);
      path_ = url.substr(path_start);
    }
  }

  std::string name() const override { return "webhook:" + url_; }

  DeliveryStatus notify(const NotificationEvent& e) override {
    const std::string body = event_to_json(e).dump();
    for (int attempt = 0; attempt < 2; attempt++) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
      }
      httplib::Client client(base_);
      client.set_connection_timeout(3, 0);
      client.set_read_timeout(3, 0);
      client.set_write_timeout(3, 0);
      auto res = client.Post(path_, body, "application/json");
      if (res && res->status >= 200 && res->status < 300) {
        return DeliveryStatus::delivered;
      }
    }
    return DeliveryStatus::failed_delivery;
  }

private:
  std::string url_;
  std::string base_;
  std::string path_;
};

// Parses a --notify spec: "console", "file:<path>" or "webhook:<url>".
// Malformed specs are rejected here, at startup, never mid-run.
inline std::unique_ptr<NotificationSink> make_sink(const std::string& spec) {
  if (spec == "console") return std::make_unique<ConsoleSink>();
  if (spec.rfind("file:", 0) == 0) {
    std::string path = spec.substr(5);
    if (path.empty()) throw ConfigError("file notification needs a path");
    return std::make_unique<FileSink>(path);
  }
  if (spec.rfind("webhook:", 0) == 0) {
    std::string url = spec.substr(8);
    if (url.empty()) throw ConfigError("webhook notification needs a url");
    return std::make_unique<WebhookSink>(url);
  }
  throw ConfigError("unknown notification spec \"" + spec +
                    "\" (use console, file:<path> or webhook:<url>)");
}

// Fans an event out to every sink. Sink errors are contained: they are
// logged and counted, never thrown into the run.
inline std::size_t emit_event(
    const std::vector<std::unique_ptr<NotificationSink>>& sinks,
    const NotificationEvent& event) {
  std::size_t failures = 0;
  for (const auto& sink : sinks) {
    try {
      if (sink->notify(event) != DeliveryStatus::delivered) {
        failures++;
        std::cerr << "mxrun: warning: notification delivery failed via "
                  << sink->name() << "\n";
      }
    } catch (const std::exception& e) {
      failures++;
      std::cerr << "mxrun: warning: notification sink " << sink->name()
                << " raised: " << e.what() << "\n";
    }
  }
  return failures;
}

}  // namespace mxrun
