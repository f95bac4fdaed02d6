#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mxrun/checkpoint.hpp"
#include "mxrun/manifest.hpp"

namespace mxrun {

enum class ExportFormat { csv, json_lines };

struct ExportOutcome {
  std::string data;
  std::uint64_t rows = 0;
  bool degraded = false;  // a succeeded record had no store entry
};

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// First line of the payload, truncated at 200 bytes.
inline std::string payload_preview(const std::string& payload) {
  std::string_view view(payload);
  if (auto nl = view.find('\n'); nl != std::string_view::npos) view = view.substr(0, nl);
  if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
  if (view.size() > 200) view = view.substr(0, 200);
  return std::string(view);
}

}  // namespace detail

// Renders the folded manifest in plan order. The tabular format is CSV with
// a header row: one column per dimension, then status, duration_ms, cached,
// payload_preview. The structured format is JSON lines with full records
// including blob references. Output bytes are a pure function of manifest
// and store contents.
inline ExportOutcome export_results(const RunManifest& manifest,
                                    const CheckpointStore* store, ExportFormat format) {
  ExportOutcome out;

  std::vector<const TaskRecord*> rows;
  for (const auto& [key, record] : manifest.fold()) rows.push_back(record);
  std::sort(rows.begin(), rows.end(),
            [](const TaskRecord* a, const TaskRecord* b) { return a->ordinal < b->ordinal; });

  if (format == ExportFormat::csv) {
    std::string& data = out.data;
    for (const auto& dim : manifest.plan.dimensions) {
      data += detail::csv_field(dim.name);
      data += ',';
    }
    data += "status,duration_ms,cached,payload_preview\n";

    for (const TaskRecord* r : rows) {
      for (const auto& dim : manifest.plan.dimensions) {
        for (const auto& [k, v] : r->params) {
          if (k == dim.name) {
            data += detail::csv_field(v.render());
            break;
          }
        }
        data += ',';
      }
      data += r->status;
      data += ',';
      data += std::to_string(r->finished_ms - r->started_ms);
      data += ',';
      data += (r->status == "restored") ? "true" : "false";
      data += ',';
      if (r->completed()) {
        std::optional<CheckpointEntry> entry;
        if (store) entry = store->lookup(TaskKey(r->key_hex));
        if (entry) {
          data += detail::csv_field(detail::payload_preview(entry->read_result()));
        } else {
          data += "payload-missing";
          out.degraded = true;
        }
      }
      data += '\n';
      out.rows++;
    }
    return out;
  }

  for (const TaskRecord* r : rows) {
    nlohmann::json j = detail::record_to_json(*r);
    j["duration_ms"] = r->finished_ms - r->started_ms;
    std::optional<CheckpointEntry> entry;
    if (store) entry = store->lookup(TaskKey(r->key_hex));
    if (entry) {
      const std::string& h = r->key_hex;
      const std::string base = h.substr(0, 2) + "/" + h.substr(2) + "/";
      j["blobs"] = {{"stdout", base + "stdout"},
                    {"stderr", base + "stderr"},
                    {"result", base + "result"}};
      j["payload_source"] = entry->meta.payload_source;
    } else if (r->completed()) {
      j["payload_missing"] = true;
      out.degraded = true;
    }
    out.data += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out.data += '\n';
    out.rows++;
  }
  return out;
}

}  // namespace mxrun
