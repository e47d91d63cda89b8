#pragma once

// Plain-text structured format shared by model and config files.
//
//   hmx-model/1              <- version header, first non-comment line
//   # comment
//   key token token ...      <- one record per line, keys may repeat
//
// Tokens are whitespace separated. Numbers are written with 17 significant
// digits so files round-trip exactly. Units are fixed by the consumer: lengths
// in meters, angles in radians, torques in N*m.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hmx::io {

inline constexpr std::string_view kModelHeader = "hmx-model/1";

struct Record {
  std::string key;
  std::vector<std::string> tokens;
  std::size_t line = 0;
};

class StructuredText {
 public:
  // Throws ParseError (with line number) on a missing or wrong header.
  static StructuredText parse(std::string_view text, std::string_view header = kModelHeader);
  static StructuredText load(const std::filesystem::path& path, std::string_view header = kModelHeader);

  const std::vector<Record>& records() const noexcept { return records_; }
  std::vector<const Record*> all(std::string_view key) const;
  const Record* find(std::string_view key) const;
  // Throws ParseError when the key is absent.
  const Record& require(std::string_view key) const;

  std::string string_value(std::string_view key) const;
  double number(std::string_view key) const;
  std::optional<double> optional_number(std::string_view key) const;
  long long integer(std::string_view key) const;

 private:
  std::vector<Record> records_;
};

// Sequential reader over one record's tokens with typed accessors; errors
// mention the record key and line.
class TokenCursor {
 public:
  explicit TokenCursor(const Record& r) : rec_(&r) {}

  bool done() const noexcept { return pos_ >= rec_->tokens.size(); }
  const std::string& word();
  double number();
  long long integer();
  // Consumes `name` and fails if the next token differs.
  void expect(std::string_view name);
  // Consumes `name` only when it is next.
  bool accept(std::string_view name);
  std::vector<double> numbers(std::size_t n);
  [[noreturn]] void fail(const std::string& what) const;

 private:
  const Record* rec_;
  std::size_t pos_ = 0;
};

class StructuredWriter {
 public:
  explicit StructuredWriter(std::string_view header = kModelHeader);

  StructuredWriter& comment(std::string_view text);
  // Starts a record; subsequent add() calls append tokens to it.
  StructuredWriter& record(std::string_view key);
  StructuredWriter& add(std::string_view word);
  StructuredWriter& add(double v);
  StructuredWriter& add(long long v);
  StructuredWriter& add(int v) { return add(static_cast<long long>(v)); }
  StructuredWriter& add(std::size_t v) { return add(static_cast<long long>(v)); }

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::string out_;
  bool open_ = false;
};

std::string format_double(double v);
// Throws ParseError when the file cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

}  // namespace hmx::io
