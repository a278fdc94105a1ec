#include "ctcp/codec.hpp"

#include <algorithm>

#include "ctcp/gf256.hpp"

namespace ctcp {

std::optional<std::size_t> CodedPayload::systematic_index() const {
  std::optional<std::size_t> idx;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (coeffs[i] == 0) continue;
    if (coeffs[i] != 1 || idx) return std::nullopt;
    idx = i;
  }
  return idx;
}

CodedPayload encode(const Block& block, std::size_t index, SeededRng& rng) {
  const std::size_t fill = block.fill_count();
  if (fill == 0) throw std::invalid_argument("encode: empty block");

  CodedPayload out;
  out.coeffs.assign(block.capacity, 0);

  if (index < fill) {
    out.coeffs[index] = 1;
    out.data = block.packets[index];
    return out;
  }

  bool nonzero = false;
  while (!nonzero) {
    for (std::size_t i = 0; i < fill; ++i) {
      out.coeffs[i] = rng.next_byte();
      nonzero = nonzero || out.coeffs[i] != 0;
    }
  }
  out.data.assign(block.payload_size, 0);
  for (std::size_t i = 0; i < fill; ++i) {
    gf::axpy(out.data, block.packets[i], out.coeffs[i]);
  }
  return out;
}

BlockDecoder::BlockDecoder(std::uint32_t blkno, std::size_t blksize, std::size_t payload_size,
                           std::size_t target)
    : blkno_(blkno),
      blksize_(blksize),
      payload_size_(payload_size),
      target_(target),
      coeffs_(blksize * blksize, 0),
      payload_(blksize * payload_size, 0),
      filled_(blksize, false),
      scratch_c_(blksize),
      scratch_p_(payload_size) {
  if (blksize == 0 || target == 0 || target > blksize) {
    throw std::invalid_argument("BlockDecoder: need 1 <= target <= blksize");
  }
}

bool BlockDecoder::insert(std::span<const std::uint8_t> coeffs, std::span<const std::uint8_t> data) {
  if (coeffs.size() != blksize_) throw std::invalid_argument("BlockDecoder: coefficient length");
  if (data.size() != payload_size_) throw std::invalid_argument("BlockDecoder: payload length");
  for (std::size_t i = target_; i < blksize_; ++i) {
    if (coeffs[i] != 0) throw std::invalid_argument("BlockDecoder: coefficient beyond fill count");
  }

  std::copy(coeffs.begin(), coeffs.end(), scratch_c_.begin());
  std::copy(data.begin(), data.end(), scratch_p_.begin());
  auto& c = scratch_c_;
  auto& p = scratch_p_;

  // Leading positions strictly increase: stored rows are zero left of their
  // unit diagonal, so each elimination clears `index` and everything before.
  std::size_t index = 0;
  while (true) {
    while (index < blksize_ && c[index] == 0) ++index;
    if (index == blksize_) return false;

    const std::uint8_t lead = c[index];
    if (!filled_[index]) {
      const std::uint8_t s = gf::inv(lead);
      gf::scale(c, s);
      gf::scale(p, s);
      std::copy(c.begin(), c.end(), c_row(index).begin());
      std::copy(p.begin(), p.end(), p_row(index).begin());
      filled_[index] = true;
      ++rank_;
      return true;
    }
    gf::axpy(std::span<std::uint8_t>(c).subspan(index), coeff_row(index).subspan(index), lead);
    gf::axpy(p, payload_row(index), lead);
  }
}

std::vector<Bytes> BlockDecoder::decode() {
  if (rank_ < target_) throw NotDecodable("block not decodable: rank below target");
  decode_row_ops_ = 0;

  for (std::size_t r = target_; r-- > 0;) {
    for (std::size_t i = 0; i < r; ++i) {
      const std::uint8_t f = coeffs_[i * blksize_ + r];
      if (f == 0) continue;
      gf::axpy(c_row(i), coeff_row(r), f);
      gf::axpy(p_row(i), payload_row(r), f);
      ++decode_row_ops_;
    }
  }

  std::vector<Bytes> out;
  out.reserve(target_);
  for (std::size_t r = 0; r < target_; ++r) {
    auto row = payload_row(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

}  // namespace ctcp
