#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "viewpulse/errors.hpp"

namespace viewpulse::binio {

// Explicit little-endian encoding so files are identical across hosts.

inline void write_u8(std::ostream& out, std::uint8_t v) {
  out.put(char(v));
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
  out.put(char(v & 0xff));
  out.put(char((v >> 8) & 0xff));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(char((v >> (8 * i)) & 0xff));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(char((v >> (8 * i)) & 0xff));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

/// Tracks the byte offset so truncation errors can say where.
class Reader {
 public:
  Reader(std::istream& in, std::string context)
      : in_(in), context_(std::move(context)) {}

  std::uint64_t offset() const { return offset_; }

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) {
      throw FormatError(context_ + ": truncated at byte " +
                        std::to_string(offset_ + std::size_t(in_.gcount())));
    }
    offset_ += n;
  }

  std::uint8_t u8() {
    char b;
    bytes(&b, 1);
    return std::uint8_t(b);
  }

  std::uint16_t u16() {
    unsigned char b[2];
    bytes(reinterpret_cast<char*>(b), 2);
    return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t n) {
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n);
    return s;
  }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(context_ + ": " + msg + " (byte " +
                      std::to_string(offset_) + ")");
  }

 private:
  std::istream& in_;
  std::string context_;
  std::uint64_t offset_ = 0;
};

}  // namespace viewpulse::binio
