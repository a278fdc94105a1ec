#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "ctcp/codec.hpp"
#include "ctcp/params.hpp"
#include "ctcp/trace.hpp"
#include "ctcp/wire.hpp"

namespace ctcp {

struct ReceiverPathStats {
  std::uint64_t received = 0;
  std::uint64_t innovative = 0;   // raised a decoder's rank
  std::uint64_t dependent = 0;    // linearly dependent on what was held
  std::uint64_t stale = 0;        // block already decoded
  std::uint64_t dropped = 0;      // outside the window or malformed
};

/// The CTCP receiver: per-block decoders over a numblks-wide window, ACK
/// construction and in-order delivery. Single-owner, not thread-safe.
class Receiver {
 public:
  Receiver(ProtocolParams params, std::uint64_t stream_length, Tracer tracer = {});

  /// Every data packet yields exactly one ACK, echoing its path and seqno.
  wire::AckPacket on_data(const wire::DataPacket& pkt, double now = 0.0);

  /// Newly decoded in-order bytes since the last call; padding stripped.
  Bytes read_delivered();

  std::uint32_t ack_currblk() const { return ack_currblk_; }
  std::uint16_t ack_currdof() const { return ack_currdof_; }
  std::uint64_t stream_length() const { return stream_length_; }
  std::uint32_t total_blocks() const { return total_blocks_; }
  std::uint64_t delivered_bytes() const { return delivered_; }
  bool complete() const { return ack_currblk_ >= total_blocks_; }

  /// Number of blocks with a live decoder (never below ack_currblk).
  std::size_t buffered_blocks() const { return decoders_.size(); }
  const BlockDecoder* decoder(std::uint32_t blkno) const;

  const std::vector<ReceiverPathStats>& path_stats() const { return stats_; }

 private:
  std::size_t block_target(std::uint32_t blkno) const;
  ReceiverPathStats& stats(std::uint8_t path);
  void advance(double now);

  ProtocolParams params_;
  std::uint64_t stream_length_;
  std::uint64_t total_packets_;
  std::uint32_t total_blocks_;
  Tracer tracer_;

  std::uint32_t ack_currblk_ = 0;
  std::uint16_t ack_currdof_ = 0;
  std::map<std::uint32_t, BlockDecoder> decoders_;
  std::uint64_t delivered_ = 0;
  Bytes out_;
  std::vector<ReceiverPathStats> stats_;
};

}  // namespace ctcp
