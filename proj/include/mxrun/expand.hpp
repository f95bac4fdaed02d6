#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mxrun/config.hpp"
#include "mxrun/task_key.hpp"
#include "mxrun/value.hpp"

namespace mxrun {

// One fully resolved parameter assignment: exactly one value per declared
// dimension. Dimension names are shared across all assignments of a plan.
class Assignment {
public:
  Assignment() = default;
  Assignment(std::shared_ptr<const std::vector<std::string>> names,
             std::vector<ParamValue> values)
      : names_(std::move(names)), values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return (*names_)[i]; }
  const ParamValue& value(std::size_t i) const { return values_[i]; }

  const ParamValue* find(std::string_view name) const {
    for (std::size_t i = 0; i < size(); i++) {
      if ((*names_)[i] == name) return &values_[i];
    }
    return nullptr;
  }

  NamedValues items() const {
    NamedValues out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); i++) {
      out.emplace_back((*names_)[i], values_[i]);
    }
    return out;
  }

private:
  std::shared_ptr<const std::vector<std::string>> names_;
  std::vector<ParamValue> values_;
};

struct Task {
  TaskKey key;
  Assignment assignment;
  std::uint64_t ordinal = 0;  // position in plan order
};

struct PlanDimension {
  std::string name;
  std::uint64_t size = 0;
};

// The expanded, exclusion-filtered task list in deterministic order:
// mixed-radix over the declared dimensions, first-declared varying slowest.
struct TaskPlan {
  std::vector<Task> tasks;
  std::uint64_t excluded_count = 0;
  std::string config_fingerprint;
  std::vector<PlanDimension> dimensions;
  NamedValues settings;

  std::uint64_t combination_count() const { return tasks.size() + excluded_count; }
};

// Plans are materialized in memory; matrices beyond this many combinations
// are rejected rather than silently thrashing.
inline constexpr std::uint64_t max_materialized_tasks = 1'000'000;

// True iff some rule's predicate is a sub-map of the assignment.
inline bool is_excluded(const Assignment& assignment,
                        std::span<const ExclusionRule> rules) {
  for (const auto& rule : rules) {
    bool all_match = !rule.predicate.empty();
    for (const auto& [key, want] : rule.predicate) {
      const ParamValue* have = assignment.find(key);
      if (!have || !(*have == want)) {
        all_match = false;
        break;
      }
    }
    if (all_match) return true;
  }
  return false;
}

namespace detail {

inline std::uint64_t checked_combination_count(const ConfigMatrix& config) {
  std::uint64_t total = 1;
  for (const auto& dim : config.dimensions) {
    std::uint64_t size = dim.values.size();
    if (size == 0) throw std::invalid_argument("dimension with no values");
    if (total > UINT64_MAX / size) {
      throw std::invalid_argument("combination count overflows");
    }
    total *= size;
  }
  return total;
}

inline void require_valid(const ConfigMatrix& config) {
  std::vector<Diagnostic> diags = validate(config);
  if (has_errors(diags)) {
    throw std::invalid_argument("expand() called on an invalid config: " +
                                diags.front().to_string());
  }
}

}  // namespace detail

inline TaskPlan expand(const ConfigMatrix& config) {
  detail::require_valid(config);
  std::uint64_t total = detail::checked_combination_count(config);
  if (total > max_materialized_tasks) {
    throw std::invalid_argument("configuration matrix is too large to expand (over " +
                                std::to_string(max_materialized_tasks) + " tasks)");
  }

  TaskPlan plan;
  plan.config_fingerprint = config_fingerprint(config);
  plan.settings = config.settings;

  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& dim : config.dimensions) {
    names->push_back(dim.name);
    plan.dimensions.push_back(PlanDimension{dim.name, dim.values.size()});
  }

  const std::size_t rank = config.dimensions.size();
  std::vector<std::size_t> index(rank, 0);
  std::uint64_t ordinal = 0;
  for (std::uint64_t n = 0; n < total; n++) {
    std::vector<ParamValue> values;
    values.reserve(rank);
    for (std::size_t d = 0; d < rank; d++) {
      values.push_back(config.dimensions[d].values[index[d]]);
    }
    Assignment assignment(names, std::move(values));
    if (is_excluded(assignment, config.exclusions)) {
      plan.excluded_count++;
    } else {
      Task task;
      task.key = task_key(assignment.items(), config.settings);
      task.assignment = std::move(assignment);
      task.ordinal = ordinal++;
      plan.tasks.push_back(std::move(task));
    }
    // Mixed-radix increment, last dimension fastest.
    for (std::size_t d = rank; d-- > 0;) {
      if (++index[d] < config.dimensions[d].values.size()) break;
      index[d] = 0;
    }
  }
  return plan;
}

struct TaskCounts {
  std::uint64_t total = 0;
  std::uint64_t excluded = 0;
};

// Counts without materializing tasks. Exclusion overlap is handled by
// inclusion-exclusion over rule subsets; overlapping rules are never
// double-counted.
inline TaskCounts count_tasks(const ConfigMatrix& config) {
  detail::require_valid(config);
  TaskCounts counts;
  counts.total = detail::checked_combination_count(config);

  const std::size_t nrules = config.exclusions.size();
  if (nrules == 0) return counts;
  if (nrules > 20) {
    // 2^r subsets would explode; this scale never occurs in practice.
    throw std::invalid_argument("count_tasks supports at most 20 exclusion rules");
  }

  std::int64_t excluded = 0;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << nrules); mask++) {
    // Merge the predicates of every rule in this subset; a conflicting pin
    // means the intersection is empty.
    std::vector<std::pair<std::string_view, const ParamValue*>> pinned;
    bool conflict = false;
    for (std::size_t r = 0; r < nrules && !conflict; r++) {
      if (!(mask & (std::uint64_t{1} << r))) continue;
      for (const auto& [key, value] : config.exclusions[r].predicate) {
        bool found = false;
        for (auto& [pk, pv] : pinned) {
          if (pk == key) {
            found = true;
            if (!(*pv == value)) conflict = true;
            break;
          }
        }
        if (!found) pinned.emplace_back(key, &value);
      }
    }
    if (conflict) continue;

    std::uint64_t combos = 1;
    for (const auto& dim : config.dimensions) {
      bool is_pinned = false;
      for (const auto& [pk, pv] : pinned) {
        if (pk == dim.name) {
          is_pinned = true;
          break;
        }
      }
      if (!is_pinned) combos *= dim.values.size();
    }
    const bool odd_subset = __builtin_popcountll(mask) & 1;
    excluded += odd_subset ? static_cast<std::int64_t>(combos)
                           : -static_cast<std::int64_t>(combos);
  }
  counts.excluded = static_cast<std::uint64_t>(excluded);
  return counts;
}

}  // namespace mxrun
