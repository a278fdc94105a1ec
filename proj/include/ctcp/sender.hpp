#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ctcp/codec.hpp"
#include "ctcp/params.hpp"
#include "ctcp/rng.hpp"
#include "ctcp/trace.hpp"
#include "ctcp/wire.hpp"

namespace ctcp {

using BlockNo = std::uint32_t;
using SeqNo = std::uint32_t;

/// Batched loss-rate EWMA over one acknowledged packet preceded by `losses`
/// lost ones: p (1-w)^(losses+1) + (1 - (1-w)^losses).
double loss_ewma(double p, double weight, std::uint32_t losses);

enum class CcMode { kSlowStart, kCongestionAvoidance };

struct SentRecord {
  BlockNo blkno = 0;
  double time = 0.0;
};

/// Per-path estimator and congestion-control state.
///
/// `tokens` is the path's transmission allowance, measured like a congestion
/// window: each packet sent consumes one unit of credit and the credit
/// returns once an ACK moves seqno_una past it (including packets the ACK
/// reveals as lost). available() is the spendable remainder.
struct PathState {
  double p = 0.0;
  double p_long = 0.0;
  double p_stdlong = 0.0;
  double rtt = 0.0;
  double rto = 0.0;
  SeqNo seqno_nxt = 0;
  SeqNo seqno_una = 0;
  double ss_threshold = 0.0;
  double time_lastack = 0.0;
  double tokens = 0.0;
  CcMode mode = CcMode::kSlowStart;

  // B(seqno) and T(seqno) for seqno in [log_base, log_base + log.size()).
  // Entries below valid_from were invalidated by a timeout.
  std::deque<SentRecord> log;
  SeqNo log_base = 0;
  SeqNo valid_from = 0;

  // Diagnostics.
  std::uint64_t packets_sent = 0;
  std::uint64_t acks_processed = 0;
  std::uint64_t timeouts = 0;

  std::uint32_t outstanding() const { return seqno_nxt - seqno_una; }
  double available() const { return tokens - static_cast<double>(outstanding()); }
  const SentRecord* lookup(SeqNo s) const;
};

enum class TokenReason { kSlowStart, kAvoidanceUp, kAvoidanceDown, kLossSpike, kTimeout, kTransmit };

/// One entry of the token mutation log. kTransmit records a credit spent
/// (tokens itself is unchanged; `before`/`after` are available credit).
struct TokenChange {
  std::size_t path = 0;
  TokenReason reason = TokenReason::kSlowStart;
  double before = 0.0;
  double after = 0.0;
};

/// The CTCP sender: estimation, token congestion control, block window and
/// block scheduling. Transport-agnostic; time is supplied by the caller in
/// seconds. Single-owner, not thread-safe.
class Sender {
 public:
  Sender(ProtocolParams params, SenderConfig config, std::size_t num_paths, std::uint64_t seed,
         Tracer tracer = {});

  const ProtocolParams& params() const { return params_; }
  const SenderConfig& config() const { return config_; }

  // Application stream.
  void push_stream(std::span<const std::uint8_t> bytes);
  /// Pads the final partial packet and seals the last block.
  void close_stream();
  bool stream_closed() const { return closed_; }
  std::uint64_t stream_length() const { return stream_length_; }
  /// Blocks the stream pushed so far segments into (partial tail included).
  std::size_t block_count() const;

  /// Marks the connection established at `now` on every path.
  void start(double now);

  void on_ack(const wire::AckPacket& ack, double now);
  /// Congestion-control reaction to one accepted ACK; on_ack calls it after
  /// updating the estimators.
  void on_ack_cc(std::size_t path, double rtt_sample);
  void on_tick(std::size_t path, double now);

  std::optional<BlockNo> schedule_single(std::size_t path, double now) const;
  std::optional<BlockNo> schedule_multi(std::size_t path, double now) const;
  std::optional<BlockNo> schedule(std::size_t path, double now) const;

  std::optional<wire::DataPacket> try_transmit(std::size_t path, double now);

  /// All data pushed, stream closed and every block acknowledged as decoded.
  bool finished() const;

  BlockNo currblk() const { return currblk_; }
  std::size_t currdof() const { return currdof_; }
  std::size_t num_paths() const { return paths_.size(); }
  const PathState& path(std::size_t i) const { return paths_.at(i); }
  /// Direct state access for tests and tools that construct scenarios.
  PathState& mutable_path(std::size_t i) { return paths_.at(i); }
  void set_window_state(BlockNo currblk, std::size_t currdof);

  /// Blocks currently held (currblk .. currblk + held - 1).
  std::size_t blocks_held() const { return window_.size(); }
  const Block* block(BlockNo blkno) const;

  void set_token_observer(std::function<void(const TokenChange&)> obs) { token_obs_ = std::move(obs); }

 private:
  struct ActiveBlock {
    Block block;
    std::size_t next_index = 0;
  };

  void set_tokens(std::size_t path, double value, TokenReason why);
  void refill_window();
  void prune_log(PathState& ps);
  std::size_t block_target(std::size_t offset) const { return window_[offset].block.fill_count(); }
  /// Counts young in-flight packets of path `k` per active block offset.
  void count_onfly(const PathState& ps, double now, std::vector<double>& onfly) const;

  ProtocolParams params_;
  SenderConfig config_;
  std::vector<PathState> paths_;
  SeededRng rng_;
  Tracer tracer_;
  std::function<void(const TokenChange&)> token_obs_;

  BlockNo currblk_ = 0;
  std::size_t currdof_ = 0;
  std::deque<ActiveBlock> window_;  // window_[i] holds block currblk_ + i

  std::deque<Bytes> pending_packets_;
  Bytes tail_;
  BlockNo next_blkno_ = 0;  // next block number to materialize
  std::uint64_t packets_formed_ = 0;
  std::uint64_t stream_length_ = 0;
  bool closed_ = false;
};

}  // namespace ctcp
