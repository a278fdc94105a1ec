#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctcp/rng.hpp"

namespace ctcp {

using Bytes = std::vector<std::uint8_t>;

/// A group of up to `capacity` equal-length source packets. The unit of
/// coding and of reliability.
struct Block {
  std::uint32_t blkno = 0;
  std::size_t capacity = 0;      // blksize
  std::size_t payload_size = 0;
  std::vector<Bytes> packets;

  std::size_t fill_count() const { return packets.size(); }
  bool full() const { return packets.size() == capacity; }
};

struct CodedPayload {
  Bytes coeffs;  // always blksize long
  Bytes data;

  /// Index of the unit coefficient if this payload is uncoded.
  std::optional<std::size_t> systematic_index() const;
};

/// Systematic encoder. Indices below the fill count return the source packet
/// verbatim; larger indices return a random combination of every packet in
/// the block, with trailing coefficients (beyond the fill count) zero.
CodedPayload encode(const Block& block, std::size_t index, SeededRng& rng);

class NotDecodable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incremental decoder for one block. Coefficient rows are kept in upper
/// triangular form with a unit diagonal; back substitution is deferred to
/// decode().
class BlockDecoder {
 public:
  /// `target` is the number of source packets in the block (the fill count;
  /// equal to blksize except for a short final block).
  BlockDecoder(std::uint32_t blkno, std::size_t blksize, std::size_t payload_size,
               std::size_t target);

  std::uint32_t blkno() const { return blkno_; }
  std::size_t blksize() const { return blksize_; }
  std::size_t target() const { return target_; }
  std::size_t rank() const { return rank_; }
  bool complete() const { return rank_ >= target_; }
  bool row_filled(std::size_t r) const { return filled_[r]; }

  /// Returns true iff the packet was linearly independent of what is held.
  bool insert(std::span<const std::uint8_t> coeffs, std::span<const std::uint8_t> data);
  bool insert(const CodedPayload& pkt) { return insert(pkt.coeffs, pkt.data); }

  /// Gauss-Jordan back substitution; returns the `target` source packets in
  /// order. Throws NotDecodable below full rank.
  std::vector<Bytes> decode();

  std::span<const std::uint8_t> coeff_row(std::size_t r) const {
    return {coeffs_.data() + r * blksize_, blksize_};
  }
  std::span<const std::uint8_t> payload_row(std::size_t r) const {
    return {payload_.data() + r * payload_size_, payload_size_};
  }

  /// Row operations performed by the last decode() call.
  std::size_t last_decode_row_ops() const { return decode_row_ops_; }

 private:
  std::span<std::uint8_t> c_row(std::size_t r) { return {coeffs_.data() + r * blksize_, blksize_}; }
  std::span<std::uint8_t> p_row(std::size_t r) {
    return {payload_.data() + r * payload_size_, payload_size_};
  }

  std::uint32_t blkno_;
  std::size_t blksize_;
  std::size_t payload_size_;
  std::size_t target_;
  std::size_t rank_ = 0;
  std::size_t decode_row_ops_ = 0;
  std::vector<std::uint8_t> coeffs_;
  std::vector<std::uint8_t> payload_;
  std::vector<bool> filled_;
  Bytes scratch_c_;
  Bytes scratch_p_;
};

}  // namespace ctcp
