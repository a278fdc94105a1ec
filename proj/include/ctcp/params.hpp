#pragma once

#include <cstddef>
#include <cstdint>

namespace ctcp {

/// Connection-wide values agreed at handshake.
struct ProtocolParams {
  std::size_t blksize = 32;        // packets per block
  std::size_t numblks = 8;         // active blocks held by each side
  std::size_t payload_size = 1024; // bytes per packet

  std::size_t block_bytes() const { return blksize * payload_size; }
};

enum class SchedulerKind { kSinglePath, kMultiPath };

/// How the multipath scheduler treats the current block.
enum class CurrblkGuard {
  /// Compare expected arrivals against the dofs the receiver still needs
  /// (blksize - currdof); the elseif fallback only applies to later blocks.
  kNeeded,
  /// Compare against currdof and let the elseif fallback apply to currblk
  /// too, exactly as the pseudocode is written.
  kLiteral,
};

/// Estimator and congestion-control constants. Defaults follow TCP-lineage
/// conventions where the protocol leaves them open.
struct SenderConfig {
  double alpha_rtt = 0.125;        // RTT EWMA weight
  double mu = 0.1;                 // short-term loss EWMA weight
  double nu = 0.01;                // long-term loss EWMA weight (nu < mu)
  double gamma = 3.0;              // RTO = gamma * RTT
  double alpha_vegas = 0.05;
  double beta_vegas = 0.25;
  double initial_tokens = 2.0;
  double token_floor = 1.0;
  double initial_ss_threshold = 64.0;
  double initial_rtt = 0.5;        // seconds
  double initial_p = 0.0;
  double initial_p_stdlong = 0.01;
  double inflight_horizon = 1.5;   // packets older than this many RTTs are not counted
  SchedulerKind scheduler = SchedulerKind::kSinglePath;
  CurrblkGuard currblk_guard = CurrblkGuard::kNeeded;
};

}  // namespace ctcp
