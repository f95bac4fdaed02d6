#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mxrun/diagnostics.hpp"
#include "mxrun/value.hpp"

// Reader and writer for the subset of TOML the config schema uses:
// top-level tables, array-of-tables, and keys whose values are scalars or
// single-level arrays of scalars. Nested arrays, inline tables, dotted keys
// and multi-line strings are rejected with a position-carrying ConfigError.

namespace mxrun::toml {

struct Item {
  std::string key;
  std::variant<ParamValue, std::vector<ParamValue>> value;
  int line = 0;
  int col = 0;

  bool is_array() const { return value.index() == 1; }
  const ParamValue& scalar() const { return std::get<ParamValue>(value); }
  const std::vector<ParamValue>& array() const {
    return std::get<std::vector<ParamValue>>(value);
  }
};

struct Table {
  std::string name;  // "" for the implicit root table
  int line = 0;
  std::vector<Item> items;  // declaration order

  const Item* find(std::string_view key) const {
    for (const auto& it : items) {
      if (it.key == key) return &it;
    }
    return nullptr;
  }
};

struct Document {
  std::vector<Table> tables;        // [name] headers, file order, names unique
  std::vector<Table> table_arrays;  // [[name]] occurrences, file order

  const Table* find_table(std::string_view name) const {
    for (const auto& t : tables) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

inline bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class Parser {
public:
  explicit Parser(std::string_view text) : text_(text) {}

  Document parse() {
    Document doc;
    Table* current = nullptr;
    Table root;
    root.name = "";

    while (!at_end()) {
      skip_ws_and_comments_to_content();
      if (at_end()) break;

      if (peek() == '[') {
        bool is_array = false;
        std::string name = parse_table_header(is_array);
        if (is_array) {
          Table t;
          t.name = name;
          t.line = line_;
          doc.table_arrays.push_back(std::move(t));
          current = &doc.table_arrays.back();
        } else {
          for (const auto& t : doc.tables) {
            if (t.name == name) {
              fail("table [" + name + "] declared twice");
            }
          }
          for (const auto& t : doc.table_arrays) {
            if (t.name == name) {
              fail("name [" + name + "] already used as an array of tables");
            }
          }
          Table t;
          t.name = name;
          t.line = line_;
          doc.tables.push_back(std::move(t));
          current = &doc.tables.back();
        }
        expect_line_end();
        continue;
      }

      Item item = parse_key_value();
      Table* target = current ? current : &root;
      if (target->find(item.key)) {
        fail_at(item.line, item.col, "duplicate key \"" + item.key + "\"");
      }
      target->items.push_back(std::move(item));
    }

    if (!root.items.empty()) {
      // The config schema keeps everything under named tables.
      const Item& it = root.items.front();
      fail_at(it.line, it.col, "key \"" + it.key + "\" appears outside any table");
    }
    return doc;
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  char advance() {
    char c = text_[pos_++];
    if (c == '\n') {
      line_++;
      col_ = 1;
    } else {
      col_++;
    }
    return c;
  }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(line_, col_, msg); }

  [[noreturn]] static void fail_at(int line, int col, const std::string& msg) {
    throw ConfigError(msg, line, col);
  }

  // Skips spaces, tabs, newlines and comments until real content.
  void skip_ws_and_comments_to_content() {
    while (!at_end()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        advance();
      } else if (c == '#') {
        skip_to_eol();
      } else {
        break;
      }
    }
  }

  // Skips spaces and tabs only (stays on the current line).
  void skip_inline_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) advance();
  }

  void skip_to_eol() {
    while (!at_end() && peek() != '\n') advance();
  }

  void expect_line_end() {
    skip_inline_ws();
    if (at_end()) return;
    if (peek() == '#') {
      skip_to_eol();
      return;
    }
    if (peek() == '\n' || peek() == '\r') return;
    fail(std::string("unexpected character '") + peek() + "' before end of line");
  }

  std::string parse_table_header(bool& is_array) {
    advance();  // consume '['
    is_array = false;
    if (!at_end() && peek() == '[') {
      advance();
      is_array = true;
    }
    skip_inline_ws();
    std::string name = parse_key();
    skip_inline_ws();
    if (at_end() || peek() != ']') fail("expected ']' in table header");
    advance();
    if (is_array) {
      if (at_end() || peek() != ']') fail("expected ']]' closing array of tables");
      advance();
    }
    return name;
  }

  std::string parse_key() {
    if (at_end()) fail("expected a key");
    char c = peek();
    if (c == '"' || c == '\'') {
      ParamValue v = parse_string();
      return v.as_string();
    }
    if (!is_bare_key_char(c)) {
      fail(std::string("expected a key, found '") + c + "'");
    }
    std::string key;
    while (!at_end() && is_bare_key_char(peek())) key += advance();
    return key;
  }

  Item parse_key_value() {
    Item item;
    item.line = line_;
    item.col = col_;
    item.key = parse_key();
    skip_inline_ws();
    if (at_end() || peek() != '=') fail("expected '=' after key \"" + item.key + "\"");
    advance();
    skip_inline_ws();
    if (at_end()) fail("expected a value after '='");
    if (peek() == '[') {
      item.value = parse_array();
    } else {
      item.value = parse_scalar();
    }
    expect_line_end();
    return item;
  }

  std::vector<ParamValue> parse_array() {
    advance();  // consume '['
    std::vector<ParamValue> values;
    while (true) {
      skip_ws_and_comments_to_content();
      if (at_end()) fail("unterminated array");
      if (peek() == ']') {
        advance();
        break;
      }
      if (peek() == '[') fail("nested arrays are not supported");
      if (peek() == '{') fail("inline tables are not supported");
      values.push_back(parse_scalar());
      skip_ws_and_comments_to_content();
      if (at_end()) fail("unterminated array");
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() == ']') {
        advance();
        break;
      }
      fail("expected ',' or ']' in array");
    }
    return values;
  }

  ParamValue parse_scalar() {
    char c = peek();
    if (c == '"' || c == '\'') return parse_string();
    if (c == '{') fail("inline tables are not supported");
    if (c == 't' || c == 'f') return parse_boolean();
    if (c == '+' || c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
      return parse_number();
    }
    if (c == 'i' || c == 'n') {
      // inf / nan would make the canonical encoding partial.
      fail("non-finite floats are not supported");
    }
    fail(std::string("unexpected value starting with '") + c + "'");
  }

  ParamValue parse_boolean() {
    int l = line_, col = col_;
    std::string word;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) word += advance();
    if (word == "true") return ParamValue(true);
    if (word == "false") return ParamValue(false);
    fail_at(l, col, "expected a value, found \"" + word + "\"");
  }

  ParamValue parse_string() {
    char quote = advance();
    int l = line_, c0 = col_;
    std::string out;
    if (quote == '\'') {
      while (true) {
        if (at_end() || peek() == '\n') fail_at(l, c0, "unterminated string");
        char c = advance();
        if (c == '\'') break;
        out += c;
      }
      return ParamValue(std::move(out));
    }
    while (true) {
      if (at_end() || peek() == '\n') fail_at(l, c0, "unterminated string");
      char c = advance();
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) fail_at(l, c0, "unterminated string");
      char esc = advance();
      switch (esc) {
        case 'b': out += '\b'; break;
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'f': out += '\f'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': out += parse_unicode_escape(4); break;
        case 'U': out += parse_unicode_escape(8); break;
        default: fail(std::string("unknown escape '\\") + esc + "'");
      }
    }
    return ParamValue(std::move(out));
  }

  std::string parse_unicode_escape(int digits) {
    std::uint32_t cp = 0;
    for (int i = 0; i < digits; i++) {
      if (at_end()) fail("truncated unicode escape");
      char c = advance();
      cp <<= 4;
      if (c >= '0' && c <= '9') cp |= static_cast<std::uint32_t>(c - '0');
      else if (c >= 'a' && c <= 'f') cp |= static_cast<std::uint32_t>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') cp |= static_cast<std::uint32_t>(c - 'A' + 10);
      else fail("invalid unicode escape digit");
    }
    return encode_utf8(cp);
  }

  static std::string encode_utf8(std::uint32_t cp) {
    std::string s;
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xE0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      s += static_cast<char>(0xF0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return s;
  }

  ParamValue parse_number() {
    int l = line_, c0 = col_;
    std::string text;
    if (peek() == '+' || peek() == '-') text += advance();
    bool is_float = false;
    bool digits_seen = false;
    while (!at_end()) {
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits_seen = true;
        text += advance();
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        text += advance();
        if (!at_end() && (c == 'e' || c == 'E') && (peek() == '+' || peek() == '-')) {
          text += advance();
        }
      } else if (c == '_') {
        fail("underscores in numbers are not supported");
      } else {
        break;
      }
    }
    if (!digits_seen) fail_at(l, c0, "malformed number");
    if (is_float) {
      double d = 0;
      auto begin = text.data();
      auto end = text.data() + text.size();
      auto [ptr, ec] = std::from_chars(begin, end, d);
      if (ec != std::errc{} || ptr != end) fail_at(l, c0, "malformed float \"" + text + "\"");
      if (!std::isfinite(d)) fail_at(l, c0, "non-finite floats are not supported");
      return ParamValue(d);
    }
    std::int64_t v = 0;
    auto begin = text.data();
    auto end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec == std::errc::result_out_of_range) {
      fail_at(l, c0, "integer out of range \"" + text + "\"");
    }
    if (ec != std::errc{} || ptr != end) fail_at(l, c0, "malformed integer \"" + text + "\"");
    return ParamValue(v);
  }
};

}  // namespace detail

inline Document parse(std::string_view text) { return detail::Parser(text).parse(); }

// -- writing ---------------------------------------------------------------

inline std::string write_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

inline std::string write_scalar(const ParamValue& v) {
  switch (v.tag()) {
    case ValueTag::string: return write_string(v.as_string());
    case ValueTag::floating: {
      // Keep the float tag on re-parse: "1" would read back as an integer.
      std::string s = v.render();
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      return s;
    }
    case ValueTag::null:
      throw ConfigError("null values cannot be written to a config file");
    default: return v.render();
  }
}

inline std::string write_key(const std::string& key) {
  bool bare = !key.empty();
  for (char c : key) {
    if (!detail::is_bare_key_char(c)) {
      bare = false;
      break;
    }
  }
  return bare ? key : write_string(key);
}

}  // namespace mxrun::toml
