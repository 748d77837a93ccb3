// Little-endian primitives shared by the dataset and bundle codecs.
#pragma once

#include "cknn/core.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace cknn::detail {

class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}

  template <typename T>
    requires std::is_integral_v<T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    out_.write(buf, sizeof(T));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

// Reads with position tracking so errors can name the failing byte offset.
class LeReader {
 public:
  LeReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  std::uint64_t offset() const { return offset_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(what_ + " at byte " + std::to_string(offset_) + ": " + msg);
  }

  void bytes(char* p, std::size_t n, const char* field) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail(std::string("truncated ") + field);
    offset_ += n;
  }

  template <typename T>
    requires std::is_integral_v<T>
  T get(const char* field) {
    unsigned char buf[sizeof(T)];
    bytes(reinterpret_cast<char*>(buf), sizeof(T), field);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    }
    return static_cast<T>(u);
  }
  float get_f32(const char* field) { return std::bit_cast<float>(get<std::uint32_t>(field)); }
  double get_f64(const char* field) { return std::bit_cast<double>(get<std::uint64_t>(field)); }

  std::string get_string(const char* field, std::uint32_t max_len = 1u << 20) {
    auto n = get<std::uint32_t>(field);
    if (n > max_len) fail(std::string(field) + " length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    bytes(s.data(), n, field);
    return s;
  }

  void expect_magic(const char (&magic)[4]) {
    char m[4];
    bytes(m, 4, "magic");
    if (std::memcmp(m, magic, 4) != 0) {
      offset_ -= 4;
      fail("bad magic, expected \"" + std::string(magic, 4) + "\"");
    }
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::string what_;
  std::uint64_t offset_ = 0;
};

}  // namespace cknn::detail
