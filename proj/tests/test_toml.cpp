#include <catch2/catch_amalgamated.hpp>

#include "mxrun/toml.hpp"

using namespace mxrun;

TEST_CASE("tables, arrays and scalars parse with order preserved", "[toml]") {
  auto doc = toml::parse(
      "# a comment\n"
      "[parameters]\n"
      "b = [1, 2, 3]   # trailing comment\n"
      "a = [\"x\", \"y\"]\n"
      "\n"
      "[settings]\n"
      "n_fold = 5\n"
      "ratio = 0.25\n"
      "verbose = true\n"
      "label = 'raw string'\n");

  const toml::Table* params = doc.find_table("parameters");
  REQUIRE(params != nullptr);
  REQUIRE(params->items.size() == 2);
  CHECK(params->items[0].key == "b");  // declaration order, not sorted
  CHECK(params->items[1].key == "a");
  CHECK(params->items[0].array().size() == 3);
  CHECK(params->items[0].array()[1] == ParamValue(std::int64_t{2}));

  const toml::Table* settings = doc.find_table("settings");
  REQUIRE(settings != nullptr);
  CHECK(settings->find("n_fold")->scalar() == ParamValue(std::int64_t{5}));
  CHECK(settings->find("ratio")->scalar() == ParamValue(0.25));
  CHECK(settings->find("verbose")->scalar() == ParamValue(true));
  CHECK(settings->find("label")->scalar() == ParamValue("raw string"));
}

TEST_CASE("array of tables accumulates occurrences", "[toml]") {
  auto doc = toml::parse(
      "[parameters]\n"
      "x = [1]\n"
      "[[exclude]]\n"
      "a = 1\n"
      "[[exclude]]\n"
      "a = 2\n"
      "b = \"two\"\n");
  REQUIRE(doc.table_arrays.size() == 2);
  CHECK(doc.table_arrays[0].items.size() == 1);
  CHECK(doc.table_arrays[1].items.size() == 2);
}

TEST_CASE("multiline arrays and string escapes", "[toml]") {
  auto doc = toml::parse(
      "[parameters]\n"
      "x = [\n"
      "  \"a\\nb\",\n"
      "  \"c\\\\d\",  # escaped backslash\n"
      "  \"\\u00e9\",\n"
      "]\n");
  const auto& values = doc.find_table("parameters")->items[0].array();
  REQUIRE(values.size() == 3);
  CHECK(values[0].as_string() == "a\nb");
  CHECK(values[1].as_string() == "c\\d");
  CHECK(values[2].as_string() == "\xc3\xa9");
}

TEST_CASE("syntax errors carry positions", "[toml]") {
  try {
    toml::parse("[parameters]\nx = [1,\ny = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() >= 2);
  }

  try {
    toml::parse("[parameters]\nx 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("unsupported shapes are rejected", "[toml]") {
  CHECK_THROWS_AS(toml::parse("[t]\nx = [[1]]\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = {a = 1}\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = [{a = 1}]\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = inf\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = nan\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("x = 1\n[t]\ny = 2\n"), ConfigError);  // root-level key
  CHECK_THROWS_AS(toml::parse("[t]\nx = 1\nx = 2\n"), ConfigError);  // duplicate key
  CHECK_THROWS_AS(toml::parse("[t]\nx = 1\n[t]\ny = 2\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = 1_000\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse("[t]\nx = 99999999999999999999999\n"), ConfigError);
}

TEST_CASE("numbers keep their tags", "[toml]") {
  auto doc = toml::parse("[t]\ni = -3\nf1 = 1.0\nf2 = 2e3\nf3 = -0.5\n");
  const toml::Table* t = doc.find_table("t");
  CHECK(t->find("i")->scalar().tag() == ValueTag::integer);
  CHECK(t->find("f1")->scalar().tag() == ValueTag::floating);
  CHECK(t->find("f2")->scalar() == ParamValue(2000.0));
  CHECK(t->find("f3")->scalar() == ParamValue(-0.5));
}

TEST_CASE("scalar writer round-trips tags", "[toml]") {
  CHECK(toml::write_scalar(ParamValue(1.0)) == "1.0");
  CHECK(toml::write_scalar(ParamValue(std::int64_t{1})) == "1");
  CHECK(toml::write_scalar(ParamValue("a\"b\\c")) == "\"a\\\"b\\\\c\"");
  CHECK(toml::write_scalar(ParamValue(false)) == "false");
  CHECK_THROWS_AS(toml::write_scalar(ParamValue::null()), ConfigError);
}
