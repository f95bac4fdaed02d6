#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mxrun/config.hpp"

using namespace mxrun;

namespace {

// The demonstration matrix: 4 dimensions of sizes 3, 2, 3, 3, one run-level
// setting and one two-key exclusion rule.
const char* kSweepConfig = R"(
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

}  // namespace

TEST_CASE("sweep config parses with declared sizes and order", "[config]") {
  ConfigFile file = parse_config(kSweepConfig);
  const ConfigMatrix& m = file.matrix;

  REQUIRE(m.dimensions.size() == 4);
  CHECK(m.dimensions[0].name == "dataset");
  CHECK(m.dimensions[0].values.size() == 3);
  CHECK(m.dimensions[1].name == "feature_engineering");
  CHECK(m.dimensions[1].values.size() == 2);
  CHECK(m.dimensions[2].values.size() == 3);
  CHECK(m.dimensions[3].values.size() == 3);

  REQUIRE(m.settings.size() == 1);
  CHECK(m.settings[0].first == "n_fold");
  CHECK(m.settings[0].second == ParamValue(std::int64_t{5}));

  REQUIRE(m.exclusions.size() == 1);
  CHECK(m.exclusions[0].predicate.size() == 2);
  CHECK(*m.exclusions[0].find("dataset") == ParamValue("digits"));

  CHECK(validate(m).empty());
}

TEST_CASE("minimal config: one dimension, one value", "[config]") {
  ConfigFile file = parse_config("[parameters]\nx = [1]\n");
  CHECK(file.matrix.dimensions.size() == 1);
  CHECK(file.matrix.dimensions[0].values.size() == 1);
  CHECK(file.matrix.settings.empty());
  CHECK(file.matrix.exclusions.empty());
  CHECK(!file.runner.has_value());
}

TEST_CASE("structural failures abort parsing", "[config]") {
  // no [parameters]
  CHECK_THROWS_AS(parse_config("[settings]\nx = 1\n"), ConfigError);
  // dimension value is not a list
  CHECK_THROWS_AS(parse_config("[parameters]\nx = 1\n"), ConfigError);
  // nested structure inside a dimension
  CHECK_THROWS_AS(parse_config("[parameters]\nx = [[1]]\n"), ConfigError);
  // settings must be scalars
  CHECK_THROWS_AS(parse_config("[parameters]\nx = [1]\n[settings]\ns = [1]\n"),
                  ConfigError);
  // [exclude] spelled as a plain table
  CHECK_THROWS_AS(parse_config("[parameters]\nx = [1]\n[exclude]\nx = 1\n"),
                  ConfigError);
  // unknown table (typo safety)
  CHECK_THROWS_AS(parse_config("[parameters]\nx = [1]\n[setings]\ns = 1\n"),
                  ConfigError);
}

TEST_CASE("runner table", "[config]") {
  ConfigFile file = parse_config(
      "[parameters]\nx = [1]\n[runner]\ncommand = \"echo {x}\"\ntimeout_ms = 300\n");
  REQUIRE(file.runner.has_value());
  CHECK(file.runner->command == "echo {x}");
  CHECK(file.runner->timeout == std::chrono::milliseconds(300));

  CHECK_THROWS_AS(parse_config("[parameters]\nx = [1]\n[runner]\ncommand = 5\n"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_config("[parameters]\nx = [1]\n[runner]\ncommand = \"a\"\ntimeout_ms = 0\n"),
      ConfigError);
  CHECK_THROWS_AS(parse_config("[parameters]\nx = [1]\n[runner]\nbogus = 1\n"),
                  ConfigError);
}

TEST_CASE("validate flags semantic violations with stable codes", "[config]") {
  SECTION("duplicate value in a dimension") {
    ConfigFile f = parse_config("[parameters]\nd = [1, 2, 1]\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.dimension.duplicate-value");
    CHECK(diags[0].path.find("d") != std::string::npos);
  }

  SECTION("unknown exclusion dimension is named") {
    ConfigFile f = parse_config(
        "[parameters]\ndataset = [\"a\"]\n[[exclude]]\ndatasett = \"a\"\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.exclude.unknown-dimension");
    CHECK(diags[0].path == "exclude[0].datasett");
  }

  SECTION("exclusion value outside the dimension domain") {
    ConfigFile f = parse_config(
        "[parameters]\ndataset = [\"a\", \"b\"]\n[[exclude]]\ndataset = \"c\"\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.exclude.value-not-in-domain");
  }

  SECTION("tag mismatch is a domain violation too") {
    ConfigFile f = parse_config(
        "[parameters]\nn = [1, 2]\n[[exclude]]\nn = 1.0\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.exclude.value-not-in-domain");
  }

  SECTION("dimension and setting names must be disjoint") {
    ConfigFile f = parse_config("[parameters]\nx = [1]\n[settings]\nx = 2\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.names.overlap");
  }

  SECTION("empty dimension list") {
    ConfigFile f = parse_config("[parameters]\nx = []\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.dimension.no-values");
  }

  SECTION("no dimensions at all") {
    ConfigFile f = parse_config("[parameters]\n");
    auto diags = validate(f.matrix);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == "config.parameters.empty");
  }
}

TEST_CASE("parse-serialize-parse is identity", "[config]") {
  ConfigFile once = parse_config(kSweepConfig);
  ConfigFile twice = parse_config(serialize_config(once));
  CHECK(once == twice);

  // Values that exercise quoting and tag preservation.
  ConfigFile tricky = parse_config(
      "[parameters]\n"
      "w = [\"a,b\", \"c\\\"d\", \"e\\nf\", \"\"]\n"
      "n = [1, -2, 0]\n"
      "f = [1.0, 0.5, -2e3]\n"
      "b = [true, false]\n"
      "[settings]\n"
      "s1 = \"x=y\"\n"
      "s2 = 3.5\n"
      "[[exclude]]\n"
      "n = -2\n"
      "b = true\n");
  CHECK(parse_config(serialize_config(tricky)) == tricky);
}

TEST_CASE("validate never throws on randomized well-formed configs", "[config]") {
  std::mt19937 gen(7);
  auto pick_name = [&](int i) { return std::string(1, static_cast<char>('a' + i)); };
  for (int round = 0; round < 200; round++) {
    std::string text = "[parameters]\n";
    int dims = static_cast<int>(gen() % 4);  // may be zero
    for (int d = 0; d < dims; d++) {
      text += pick_name(d) + " = [";
      int n = static_cast<int>(gen() % 3);  // may be empty
      for (int v = 0; v < n; v++) {
        if (v) text += ", ";
        text += std::to_string(gen() % 3);  // may collide
      }
      text += "]\n";
    }
    if (gen() % 2) {
      text += "[settings]\n";
      text += pick_name(static_cast<int>(gen() % 5)) + " = 1\n";
    }
    if (gen() % 2) {
      text += "[[exclude]]\n";
      text += pick_name(static_cast<int>(gen() % 5)) + " = " +
              std::to_string(gen() % 4) + "\n";
    }
    ConfigFile file = parse_config(text);
    CHECK_NOTHROW(validate(file.matrix));
  }
}

TEST_CASE("fingerprint encoding separates structure from values", "[config]") {
  ConfigFile a = parse_config("[parameters]\nx = [1, 2]\n");
  ConfigFile b = parse_config("[parameters]\nx = [1]\ny = [2]\n");
  ConfigFile c = parse_config("[parameters]\nx = [1, 2]\n[settings]\ns = 1\n");
  CHECK(canonical_config_encoding(a.matrix) != canonical_config_encoding(b.matrix));
  CHECK(canonical_config_encoding(a.matrix) != canonical_config_encoding(c.matrix));
  CHECK(canonical_config_encoding(a.matrix) ==
        canonical_config_encoding(parse_config("[parameters]\nx = [1, 2]\n").matrix));

  // Exclusion rule order is semantically irrelevant and normalized away.
  ConfigFile r1 = parse_config(
      "[parameters]\nx = [1, 2]\ny = [1, 2]\n[[exclude]]\nx = 1\n[[exclude]]\ny = 2\n");
  ConfigFile r2 = parse_config(
      "[parameters]\nx = [1, 2]\ny = [1, 2]\n[[exclude]]\ny = 2\n[[exclude]]\nx = 1\n");
  CHECK(canonical_config_encoding(r1.matrix) == canonical_config_encoding(r2.matrix));
}
