#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "mxrun/expand.hpp"

using namespace mxrun;

namespace {

const char* kSweepNoExclude = R"(
[parameters]
dataset = ["digits", "wine", "breast_cancer"]
feature_engineering = ["dummy_imputer", "simple_imputer"]
preprocessing = ["dummy_preprocessor", "minmax_scaler", "standard_scaler"]
model = ["adaboost", "random_forest", "svc"]

[settings]
n_fold = 5
)";

const char* kSweepWithExclude = R"(
[parameters]
dataset = ["digits", "wine", "breast_cancer"]
feature_engineering = ["dummy_imputer", "simple_imputer"]
preprocessing = ["dummy_preprocessor", "minmax_scaler", "standard_scaler"]
model = ["adaboost", "random_forest", "svc"]

[settings]
n_fold = 5

[[exclude]]
dataset = "digits"
feature_engineering = "simple_imputer"
)";

// Independent oracle: enumerate assignments with odometer arithmetic and
// apply the exclusion semantics directly, without touching expand() or
// is_excluded(). Returns every non-excluded assignment as a sorted
// name=rendered-value signature.
std::vector<std::string> brute_force_assignments(const ConfigMatrix& config,
                                                 std::uint64_t* excluded_out = nullptr) {
  std::vector<std::string> kept;
  std::uint64_t excluded = 0;
  std::vector<std::size_t> idx(config.dimensions.size(), 0);
  for (;;) {
    bool is_excluded = false;
    for (const auto& rule : config.exclusions) {
      bool all = true;
      for (const auto& [key, want] : rule.predicate) {
        bool pair_ok = false;
        for (std::size_t d = 0; d < config.dimensions.size(); d++) {
          if (config.dimensions[d].name == key) {
            pair_ok = config.dimensions[d].values[idx[d]] == want;
            break;
          }
        }
        if (!pair_ok) {
          all = false;
          break;
        }
      }
      if (all && !rule.predicate.empty()) {
        is_excluded = true;
        break;
      }
    }
    if (is_excluded) {
      excluded++;
    } else {
      std::vector<std::string> parts;
      for (std::size_t d = 0; d < config.dimensions.size(); d++) {
        parts.push_back(config.dimensions[d].name + "=" +
                        std::to_string(static_cast<int>(
                            config.dimensions[d].values[idx[d]].tag())) +
                        ":" + config.dimensions[d].values[idx[d]].render());
      }
      std::sort(parts.begin(), parts.end());
      std::string sig;
      for (const auto& p : parts) sig += p + "|";
      kept.push_back(sig);
    }
    std::size_t d = config.dimensions.size();
    while (d-- > 0) {
      if (++idx[d] < config.dimensions[d].values.size()) break;
      idx[d] = 0;
      if (d == 0) {
        if (excluded_out) *excluded_out = excluded;
        return kept;
      }
    }
    if (config.dimensions.empty()) break;
  }
  if (excluded_out) *excluded_out = excluded;
  return kept;
}

std::string assignment_signature(const Assignment& a) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < a.size(); i++) {
    parts.push_back(a.name(i) + "=" +
                    std::to_string(static_cast<int>(a.value(i).tag())) + ":" +
                    a.value(i).render());
  }
  std::sort(parts.begin(), parts.end());
  std::string sig;
  for (const auto& p : parts) sig += p + "|";
  return sig;
}

ConfigMatrix random_config(std::mt19937& gen, int max_rules = 3) {
  ConfigMatrix config;
  int dims = 1 + static_cast<int>(gen() % 4);
  for (int d = 0; d < dims; d++) {
    Dimension dim;
    dim.name = std::string(1, static_cast<char>('a' + d));
    int n = 1 + static_cast<int>(gen() % 5);
    for (int v = 0; v < n; v++) dim.values.push_back(ParamValue(std::int64_t{v}));
    config.dimensions.push_back(std::move(dim));
  }
  int rules = static_cast<int>(gen() % (max_rules + 1));
  for (int r = 0; r < rules; r++) {
    ExclusionRule rule;
    int pairs = 1 + static_cast<int>(gen() % dims);
    std::vector<int> order(dims);
    for (int i = 0; i < dims; i++) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    for (int p = 0; p < pairs; p++) {
      const Dimension& dim = config.dimensions[order[p]];
      rule.predicate.emplace_back(
          dim.name, dim.values[gen() % dim.values.size()]);
    }
    config.exclusions.push_back(std::move(rule));
  }
  return config;
}

}  // namespace

TEST_CASE("sweep matrix expands to 54 tasks without exclusions", "[expand]") {
  TaskPlan plan = expand(parse_config(kSweepNoExclude).matrix);
  CHECK(plan.tasks.size() == 54);
  CHECK(plan.excluded_count == 0);
}

TEST_CASE("one exclusion removes exactly the brute-forced 9", "[expand]") {
  ConfigMatrix config = parse_config(kSweepWithExclude).matrix;

  std::uint64_t oracle_excluded = 0;
  auto oracle = brute_force_assignments(config, &oracle_excluded);
  REQUIRE(oracle.size() == 45);
  REQUIRE(oracle_excluded == 9);

  TaskPlan plan = expand(config);
  CHECK(plan.tasks.size() == 45);
  CHECK(plan.excluded_count == 9);

  TaskCounts counts = count_tasks(config);
  CHECK(counts.total == 54);
  CHECK(counts.excluded == 9);
}

TEST_CASE("single singleton dimension yields one task", "[expand]") {
  ConfigMatrix config = parse_config("[parameters]\nx = [1]\n").matrix;
  TaskPlan plan = expand(config);
  CHECK(plan.tasks.size() == 1);
  CHECK(plan.excluded_count == 0);
}

TEST_CASE("is_excluded implements partial-match semantics", "[expand]") {
  ConfigMatrix config = parse_config(kSweepWithExclude).matrix;
  TaskPlan plan = expand(parse_config(kSweepNoExclude).matrix);

  const Assignment* digits_simple = nullptr;
  const Assignment* wine_simple = nullptr;
  for (const auto& task : plan.tasks) {
    if (task.assignment.find("dataset")->as_string() == "digits" &&
        task.assignment.find("feature_engineering")->as_string() == "simple_imputer") {
      digits_simple = &task.assignment;
    }
    if (task.assignment.find("dataset")->as_string() == "wine" &&
        task.assignment.find("feature_engineering")->as_string() == "simple_imputer") {
      wine_simple = &task.assignment;
    }
  }
  REQUIRE(digits_simple != nullptr);
  REQUIRE(wine_simple != nullptr);

  CHECK(is_excluded(*digits_simple, config.exclusions));
  CHECK_FALSE(is_excluded(*wine_simple, config.exclusions));
  CHECK_FALSE(is_excluded(*digits_simple, {}));  // vacuous disjunction
}

TEST_CASE("overlapping rules are not double-counted", "[expand]") {
  ConfigMatrix config = parse_config(
      "[parameters]\n"
      "a = [1, 2]\n"
      "b = [1, 2]\n"
      "[[exclude]]\n"
      "a = 1\n"
      "[[exclude]]\n"
      "a = 1\n"
      "b = 2\n").matrix;
  TaskCounts counts = count_tasks(config);
  CHECK(counts.total == 4);
  CHECK(counts.excluded == 2);
  CHECK(expand(config).tasks.size() == 2);
}

TEST_CASE("plan order is mixed-radix with the first dimension slowest", "[expand]") {
  ConfigMatrix config = parse_config(
      "[parameters]\nslow = [\"s0\", \"s1\"]\nfast = [\"f0\", \"f1\", \"f2\"]\n").matrix;
  TaskPlan plan = expand(config);
  REQUIRE(plan.tasks.size() == 6);
  std::vector<std::string> order;
  for (const auto& task : plan.tasks) {
    order.push_back(task.assignment.find("slow")->as_string() + "/" +
                    task.assignment.find("fast")->as_string());
  }
  CHECK(order == std::vector<std::string>{"s0/f0", "s0/f1", "s0/f2",
                                          "s1/f0", "s1/f1", "s1/f2"});
  for (std::size_t i = 0; i < plan.tasks.size(); i++) {
    CHECK(plan.tasks[i].ordinal == i);
  }
}

TEST_CASE("expand agrees with the brute-force oracle on random configs", "[expand]") {
  std::mt19937 gen(41);
  for (int round = 0; round < 150; round++) {
    ConfigMatrix config = random_config(gen);
    std::uint64_t oracle_excluded = 0;
    auto oracle = brute_force_assignments(config, &oracle_excluded);

    TaskPlan plan = expand(config);
    TaskCounts counts = count_tasks(config);

    // Inclusion-exclusion consistency.
    CHECK(plan.tasks.size() == counts.total - counts.excluded);
    CHECK(plan.excluded_count == counts.excluded);
    CHECK(counts.excluded == oracle_excluded);

    // Exhaustiveness: exactly one task per non-excluded assignment.
    std::multiset<std::string> got;
    for (const auto& task : plan.tasks) got.insert(assignment_signature(task.assignment));
    std::multiset<std::string> want(oracle.begin(), oracle.end());
    CHECK(got == want);

    // Keys pairwise distinct.
    std::set<std::string> keys;
    for (const auto& task : plan.tasks) keys.insert(task.key.hex());
    CHECK(keys.size() == plan.tasks.size());
  }
}

TEST_CASE("expand is deterministic and rule order is irrelevant", "[expand]") {
  std::mt19937 gen(99);
  for (int round = 0; round < 30; round++) {
    ConfigMatrix config = random_config(gen);
    TaskPlan a = expand(config);
    TaskPlan b = expand(config);
    REQUIRE(a.tasks.size() == b.tasks.size());
    for (std::size_t i = 0; i < a.tasks.size(); i++) {
      CHECK(a.tasks[i].key == b.tasks[i].key);
    }

    ConfigMatrix shuffled = config;
    std::shuffle(shuffled.exclusions.begin(), shuffled.exclusions.end(), gen);
    TaskPlan c = expand(shuffled);
    REQUIRE(c.tasks.size() == a.tasks.size());
    for (std::size_t i = 0; i < a.tasks.size(); i++) {
      CHECK(c.tasks[i].key == a.tasks[i].key);
    }
  }
}

TEST_CASE("oversized matrices are rejected up front", "[expand]") {
  ConfigMatrix config;
  for (int d = 0; d < 3; d++) {
    Dimension dim;
    dim.name = std::string(1, static_cast<char>('a' + d));
    for (int v = 0; v < 101; v++) dim.values.push_back(ParamValue(std::int64_t{v}));
    config.dimensions.push_back(std::move(dim));
  }
  // 101^3 = 1,030,301 > the materialization cap
  CHECK_THROWS_AS(expand(config), std::invalid_argument);
  CHECK(count_tasks(config).total == 1030301);  // counting still works
}

TEST_CASE("expand refuses invalid configs", "[expand]") {
  ConfigMatrix config = parse_config("[parameters]\nx = [1, 1]\n").matrix;
  CHECK_THROWS_AS(expand(config), std::invalid_argument);
}
