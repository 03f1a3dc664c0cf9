#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tcqa {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file; message carries path and line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, truncated, or wrong-format binary files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition or API contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t pack_pair(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

inline std::uint32_t pair_first(std::uint64_t key) {
  return static_cast<std::uint32_t>(key >> 32);
}

inline std::uint32_t pair_second(std::uint64_t key) {
  return static_cast<std::uint32_t>(key & 0xffffffffu);
}

}  // namespace tcqa
