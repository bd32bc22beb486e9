#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphcast {

std::vector<std::uint8_t> read_file(const std::string& path);

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian byte writer, independent of host byte order.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n);
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);
  const std::vector<std::uint8_t>& data() const { return buf_; }
  void save(const std::string& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data, std::string what = "file")
      : buf_(std::move(data)), what_(std::move(what)) {}
  static ByteReader load(const std::string& path);

  void magic(const char tag[4]);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32();
  double f64();
  std::string str();
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n);
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace sphcast
