#include "hmx/io/binary.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hmx/error.hpp"

namespace hmx::io {

static_assert(std::endian::native == std::endian::little, "binary model files assume a little-endian host");

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

constexpr std::uint64_t kMaxArray = std::uint64_t{1} << 34;

}  // namespace

BinaryWriter::BinaryWriter(std::string_view magic, std::uint32_t version) {
  buf_.append(magic);
  u32(version);
}

void BinaryWriter::u32(std::uint32_t v) { put(buf_, v); }
void BinaryWriter::u64(std::uint64_t v) { put(buf_, v); }
void BinaryWriter::f64(double v) { put(buf_, v); }

void BinaryWriter::string(std::string_view s) {
  u64(s.size());
  buf_.append(s);
}

void BinaryWriter::f32_array(std::span<const double> values) {
  u64(values.size());
  for (double v : values) put(buf_, static_cast<float>(v));
}

void BinaryWriter::i64_array(std::span<const std::int64_t> values) {
  u64(values.size());
  for (auto v : values) put(buf_, v);
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw Error("write failed: " + path.string());
}

BinaryReader::BinaryReader(std::string bytes, std::string_view magic, std::uint32_t max_version)
    : buf_(std::move(bytes)) {
  if (buf_.size() < magic.size() || std::string_view(buf_).substr(0, magic.size()) != magic)
    fail("bad magic, expected '" + std::string(magic) + "'");
  pos_ = magic.size();
  version_ = u32();
  if (version_ == 0 || version_ > max_version) fail("unsupported version " + std::to_string(version_));
}

BinaryReader BinaryReader::load(const std::filesystem::path& path, std::string_view magic,
                                std::uint32_t max_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return BinaryReader(ss.str(), magic, max_version);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void BinaryReader::fail(const std::string& what) const {
  throw ParseError("byte " + std::to_string(pos_) + ": " + what);
}

void BinaryReader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) fail("truncated (need " + std::to_string(n) + " bytes)");
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::string() {
  const std::uint64_t n = u64();
  if (n > buf_.size()) fail("string length " + std::to_string(n) + " exceeds file size");
  need(static_cast<std::size_t>(n));
  std::string s = buf_.substr(pos_, static_cast<std::size_t>(n));
  pos_ += static_cast<std::size_t>(n);
  return s;
}

std::vector<double> BinaryReader::f32_array() {
  const std::uint64_t n = u64();
  if (n > kMaxArray) fail("array length " + std::to_string(n) + " too large");
  need(static_cast<std::size_t>(n) * 4);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) {
    float f;
    std::memcpy(&f, buf_.data() + pos_, 4);
    pos_ += 4;
    v = f;
  }
  return out;
}

std::vector<std::int64_t> BinaryReader::i64_array() {
  const std::uint64_t n = u64();
  if (n > kMaxArray) fail("array length " + std::to_string(n) + " too large");
  need(static_cast<std::size_t>(n) * 8);
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  std::memcpy(out.data(), buf_.data() + pos_, out.size() * 8);
  pos_ += out.size() * 8;
  return out;
}

}  // namespace hmx::io
