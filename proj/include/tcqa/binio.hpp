#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tcqa/common.hpp"

// Little-endian binary readers/writers shared by the model, matrix, and
// parameter file formats. Short reads throw IoError instead of returning
// garbage.
namespace tcqa::binio {

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* data, std::size_t n) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw IoError("truncated or unreadable file");
  }
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline void write_f32(std::ostream& os, float v) {
  write_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v;
  read_bytes(is, &v, 1);
  return v;
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  read_bytes(is, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  read_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_magic(std::ostream& os, const char magic[4]) {
  write_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
  char got[4];
  read_bytes(is, got, 4);
  if (std::memcmp(got, magic, 4) != 0) {
    throw IoError("bad magic: not a " + what + " file");
  }
}

}  // namespace tcqa::binio
