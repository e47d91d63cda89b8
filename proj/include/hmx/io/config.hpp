#pragma once

// Run configuration in the structured text format:
//
//   hmx-config/1
//   tokenizer.train.epochs 20
//   pipeline.tokenize true
//
// Each key holds one value. Consumers read keys with defaults; keys nobody
// read are reported by reject_unused() so typos fail loudly.

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>

#include "hmx/io/structured_text.hpp"

namespace hmx::io {

inline constexpr std::string_view kConfigHeader = "hmx-config/1";

class Config {
 public:
  Config() = default;
  static Config parse(std::string_view text, std::filesystem::path base_dir = {});
  static Config load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
  std::size_t count(std::string_view key, std::size_t fallback) const;
  bool flag(std::string_view key, bool fallback) const;
  std::string string(std::string_view key, std::string fallback) const;
  // Relative paths resolve against the config file's directory.
  std::filesystem::path path(std::string_view key, std::filesystem::path fallback) const;

  // Throws ValidationError naming the first key that was never read. With
  // prefixes, keys under other known sections are left for other consumers
  // and only keys outside every known section, or unread keys under the given
  // prefixes, fail.
  void reject_unused() const;
  void reject_unused(std::initializer_list<std::string_view> prefixes,
                     std::initializer_list<std::string_view> known_sections) const;

 private:
  const Record* get(std::string_view key) const;
  StructuredText text_;
  std::filesystem::path base_;
  mutable std::set<std::string, std::less<>> used_;
};

}  // namespace hmx::io
