#include "crl/hash.hpp"

#include <cstdio>
#include <cstring>

namespace crl {

static constexpr std::uint64_t kPrime = 1099511628211ull;

void Fnv1a64::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= kPrime;
  }
}

void Fnv1a64::u64(std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(buf, 8);
}

void Fnv1a64::f64(double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}

void Fnv1a64::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void Fnv1a64::f64span(const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) f64(data[i]);
}

std::string hashHex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace crl
