#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crl {

/// Incremental FNV-1a (64 bit). Doubles are hashed by bit pattern so equal
/// inputs give equal digests across runs.
struct Fnv1a64 {
  std::uint64_t state = 14695981039346656037ull;

  void bytes(const void* data, std::size_t n);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void i32(std::int32_t v) { i64(v); }
  void f64(double v);
  void str(const std::string& s);
  void f64span(const double* data, std::size_t n);

  std::uint64_t value() const { return state; }
};

std::string hashHex(std::uint64_t h);

}  // namespace crl
