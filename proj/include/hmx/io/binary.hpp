#pragma once

// Little-endian binary containers for trained models: a 4-byte magic, a u32
// version, then a sequence of fields. Float arrays are stored as f32 with a
// u64 element count prefix.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hmx::io {

class BinaryWriter {
 public:
  BinaryWriter(std::string_view magic, std::uint32_t version);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void string(std::string_view s);  // u64 length + bytes
  void f32_array(std::span<const double> values);
  void i64_array(std::span<const std::int64_t> values);

  const std::string& bytes() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

// Every read error is a ParseError naming the byte offset.
class BinaryReader {
 public:
  BinaryReader(std::string bytes, std::string_view magic, std::uint32_t max_version);
  static BinaryReader load(const std::filesystem::path& path, std::string_view magic, std::uint32_t max_version);

  std::uint32_t version() const noexcept { return version_; }
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string string();
  std::vector<double> f32_array();
  std::vector<std::int64_t> i64_array();
  bool done() const noexcept { return pos_ == buf_.size(); }
  std::size_t offset() const noexcept { return pos_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n) const;
  std::string buf_;
  std::size_t pos_ = 0;
  std::uint32_t version_ = 0;
};

}  // namespace hmx::io
