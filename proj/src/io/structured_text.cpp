#include "hmx/io/structured_text.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hmx/error.hpp"

namespace hmx::io {
namespace {

bool parse_double(std::string_view s, double& out) {
  // from_chars for double is available in libstdc++ 11.
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (v == 0.0) return std::signbit(v) ? "-0" : "0";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

StructuredText StructuredText::parse(std::string_view text, std::string_view header) {
  StructuredText st;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::istringstream ls{std::string(line)};
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(std::move(t));
    if (toks.empty()) continue;
    if (!have_header) {
      if (toks.size() != 1 || toks[0] != header) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" + std::string(header) +
                         "', found '" + toks[0] + "'");
      }
      have_header = true;
      continue;
    }
    Record r;
    r.key = toks[0];
    r.tokens.assign(toks.begin() + 1, toks.end());
    r.line = line_no;
    st.records_.push_back(std::move(r));
    if (end == text.size()) break;
  }
  if (!have_header) throw ParseError("missing header '" + std::string(header) + "'");
  return st;
}

StructuredText StructuredText::load(const std::filesystem::path& path, std::string_view header) {
  try {
    return parse(read_text_file(path), header);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<const Record*> StructuredText::all(std::string_view key) const {
  std::vector<const Record*> out;
  for (const auto& r : records_)
    if (r.key == key) out.push_back(&r);
  return out;
}

const Record* StructuredText::find(std::string_view key) const {
  for (const auto& r : records_)
    if (r.key == key) return &r;
  return nullptr;
}

const Record& StructuredText::require(std::string_view key) const {
  if (const Record* r = find(key)) return *r;
  throw ParseError("missing required key '" + std::string(key) + "'");
}

std::string StructuredText::string_value(std::string_view key) const {
  const Record& r = require(key);
  TokenCursor c(r);
  std::string v = c.word();
  if (!c.done()) c.fail("expected a single value");
  return v;
}

double StructuredText::number(std::string_view key) const {
  const Record& r = require(key);
  TokenCursor c(r);
  const double v = c.number();
  if (!c.done()) c.fail("expected a single value");
  return v;
}

std::optional<double> StructuredText::optional_number(std::string_view key) const {
  if (!find(key)) return std::nullopt;
  return number(key);
}

long long StructuredText::integer(std::string_view key) const {
  const Record& r = require(key);
  TokenCursor c(r);
  const long long v = c.integer();
  if (!c.done()) c.fail("expected a single value");
  return v;
}

const std::string& TokenCursor::word() {
  if (done()) fail("unexpected end of record");
  return rec_->tokens[pos_++];
}

double TokenCursor::number() {
  const std::string& w = word();
  double v = 0.0;
  if (!parse_double(w, v) || !std::isfinite(v)) fail("expected a finite number, found '" + w + "'");
  return v;
}

long long TokenCursor::integer() {
  const std::string& w = word();
  long long v = 0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size()) fail("expected an integer, found '" + w + "'");
  return v;
}

void TokenCursor::expect(std::string_view name) {
  const std::string& w = word();
  if (w != name) fail("expected '" + std::string(name) + "', found '" + w + "'");
}

bool TokenCursor::accept(std::string_view name) {
  if (!done() && rec_->tokens[pos_] == name) {
    ++pos_;
    return true;
  }
  return false;
}

std::vector<double> TokenCursor::numbers(std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = number();
  return v;
}

void TokenCursor::fail(const std::string& what) const {
  throw ParseError("line " + std::to_string(rec_->line) + " ('" + rec_->key + "'): " + what);
}

StructuredWriter::StructuredWriter(std::string_view header) : out_(header) {}

StructuredWriter& StructuredWriter::comment(std::string_view text) {
  out_ += "\n# ";
  out_ += text;
  open_ = false;
  return *this;
}

StructuredWriter& StructuredWriter::record(std::string_view key) {
  out_ += '\n';
  out_ += key;
  open_ = true;
  return *this;
}

StructuredWriter& StructuredWriter::add(std::string_view word) {
  out_ += ' ';
  out_ += word;
  return *this;
}

StructuredWriter& StructuredWriter::add(double v) { return add(std::string_view(format_double(v))); }

StructuredWriter& StructuredWriter::add(long long v) { return add(std::string_view(std::to_string(v))); }

std::string StructuredWriter::str() const { return out_ + "\n"; }

void StructuredWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << str();
}

}  // namespace hmx::io
