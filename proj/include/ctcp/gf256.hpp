#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace ctcp::gf {

/// Reduction polynomial x^8 + x^4 + x^3 + x + 1.
inline constexpr unsigned kPolynomial = 0x11B;

/// Log/antilog tables plus a full 256x256 product table for row operations.
/// Built once; all members are read-only afterwards.
struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<std::uint8_t, 256> log{};
  std::array<std::uint8_t, 256> inv{};
  std::array<std::array<std::uint8_t, 256>, 256> mul{};
};

const Tables& tables();

inline std::uint8_t add(std::uint8_t a, std::uint8_t b) { return a ^ b; }
inline std::uint8_t sub(std::uint8_t a, std::uint8_t b) { return a ^ b; }

inline std::uint8_t mul(std::uint8_t a, std::uint8_t b) { return tables().mul[a][b]; }

/// Multiplicative inverse. inv(0) is a contract violation and throws.
std::uint8_t inv(std::uint8_t a);

std::uint8_t div(std::uint8_t a, std::uint8_t b);

/// dst[i] ^= c * src[i]
void axpy(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src, std::uint8_t c);

/// row[i] = c * row[i]
void scale(std::span<std::uint8_t> row, std::uint8_t c);

}  // namespace ctcp::gf
