#include "ctcp/gf256.hpp"

#include <stdexcept>

namespace ctcp::gf {

namespace {

Tables build_tables() {
  Tables t;
  // 0x03 generates the multiplicative group under 0x11B.
  unsigned x = 1;
  for (unsigned i = 0; i < 255; ++i) {
    t.exp[i] = static_cast<std::uint8_t>(x);
    t.log[x] = static_cast<std::uint8_t>(i);
    unsigned x2 = x << 1;
    if (x2 & 0x100) x2 ^= kPolynomial;
    x ^= x2;
  }
  for (unsigned i = 255; i < t.exp.size(); ++i) t.exp[i] = t.exp[i - 255];

  for (unsigned a = 1; a < 256; ++a) {
    t.inv[a] = t.exp[255 - t.log[a]];
    for (unsigned b = 1; b < 256; ++b) {
      t.mul[a][b] = t.exp[t.log[a] + t.log[b]];
    }
  }
  return t;
}

}  // namespace

const Tables& tables() {
  static const Tables t = build_tables();
  return t;
}

std::uint8_t inv(std::uint8_t a) {
  if (a == 0) throw std::domain_error("gf256: zero has no inverse");
  return tables().inv[a];
}

std::uint8_t div(std::uint8_t a, std::uint8_t b) { return mul(a, inv(b)); }

void axpy(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src, std::uint8_t c) {
  if (c == 0) return;
  const std::size_t n = dst.size() < src.size() ? dst.size() : src.size();
  if (c == 1) {
    for (std::size_t i = 0; i < n; ++i) dst[i] ^= src[i];
    return;
  }
  const auto& row = tables().mul[c];
  for (std::size_t i = 0; i < n; ++i) dst[i] ^= row[src[i]];
}

void scale(std::span<std::uint8_t> row, std::uint8_t c) {
  if (c == 1) return;
  const auto& m = tables().mul[c];
  for (auto& v : row) v = m[v];
}

}  // namespace ctcp::gf
