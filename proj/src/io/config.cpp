#include "hmx/io/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "hmx/error.hpp"

namespace hmx::io {

Config Config::parse(std::string_view text, std::filesystem::path base_dir) {
  Config c;
  c.text_ = StructuredText::parse(text, kConfigHeader);
  c.base_ = std::move(base_dir);
  std::set<std::string, std::less<>> seen;
  for (const auto& r : c.text_.records()) {
    if (r.tokens.size() != 1)
      throw ParseError("line " + std::to_string(r.line) + ": '" + r.key + "' takes exactly one value");
    if (!seen.insert(r.key).second)
      throw ParseError("line " + std::to_string(r.line) + ": duplicate key '" + r.key + "'");
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  try {
    return parse(read_text_file(path), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

const Record* Config::get(std::string_view key) const {
  const Record* r = text_.find(key);
  if (r) used_.emplace(key);
  return r;
}

bool Config::has(std::string_view key) const { return text_.find(key) != nullptr; }

double Config::number(std::string_view key, double fallback) const {
  const Record* r = get(key);
  if (!r) return fallback;
  const std::string& s = r->tokens[0];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(r->line) + ": '" + r->key + "' expects a number, got '" + s + "'");
  return v;
}

std::size_t Config::count(std::string_view key, std::size_t fallback) const {
  const Record* r = get(key);
  if (!r) return fallback;
  const std::string& s = r->tokens[0];
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("line " + std::to_string(r->line) + ": '" + r->key + "' expects a non-negative integer, got '" +
                     s + "'");
  return v;
}

bool Config::flag(std::string_view key, bool fallback) const {
  const Record* r = get(key);
  if (!r) return fallback;
  const std::string& s = r->tokens[0];
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ParseError("line " + std::to_string(r->line) + ": '" + r->key + "' expects true or false, got '" + s + "'");
}

std::string Config::string(std::string_view key, std::string fallback) const {
  const Record* r = get(key);
  return r ? r->tokens[0] : fallback;
}

std::filesystem::path Config::path(std::string_view key, std::filesystem::path fallback) const {
  const Record* r = get(key);
  if (!r) return fallback;
  std::filesystem::path p = r->tokens[0];
  return p.is_relative() && !base_.empty() ? base_ / p : p;
}

void Config::reject_unused() const {
  for (const auto& r : text_.records())
    if (!used_.contains(r.key))
      throw ValidationError("config line " + std::to_string(r.line) + ": unknown key '" + r.key + "'");
}

void Config::reject_unused(std::initializer_list<std::string_view> prefixes,
                           std::initializer_list<std::string_view> known_sections) const {
  auto starts = [](const std::string& key, std::string_view p) { return key.compare(0, p.size(), p) == 0; };
  for (const auto& r : text_.records()) {
    const bool known = std::any_of(known_sections.begin(), known_sections.end(), [&](auto p) { return starts(r.key, p); });
    const bool mine = std::any_of(prefixes.begin(), prefixes.end(), [&](auto p) { return starts(r.key, p); });
    if (!known || (mine && !used_.contains(r.key)))
      throw ValidationError("config line " + std::to_string(r.line) + ": unknown key '" + r.key + "'");
  }
}

}  // namespace hmx::io
