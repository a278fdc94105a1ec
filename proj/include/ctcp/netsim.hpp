#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctcp/params.hpp"
#include "ctcp/rng.hpp"
#include "ctcp/session.hpp"
#include "ctcp/trace.hpp"

// Deterministic discrete-event simulation of lossy, rate-limited paths
// carrying one CTCP connection.
namespace ctcp::sim {

struct PathConfig {
  double one_way_delay = 0.05;     // seconds
  double bandwidth = 20e6;         // bits per second, forward direction
  double loss_rate = 0.0;          // i.i.d. Bernoulli per forward packet
  std::size_t queue_capacity = 100;  // packets, including the one on the wire
  std::uint64_t seed = 1;
  double jitter = 0.0;             // mean of exponential extra delay (reordering)
  double ack_loss_rate = 0.0;      // reverse direction

  void validate() const;
};

/// Drop decision for one packet from the path's own generator.
bool loss_draw(const PathConfig& path, SeededRng& rng);

struct SimLimits {
  double tick_interval = 0.01;
  double sample_interval = 0.1;
  double stall_timeout = 30.0;   // simulated seconds without progress
  double max_time = 3600.0;
};

struct TransferOptions {
  ProtocolParams params;
  SenderConfig sender;
  SessionTiming timing;
  std::uint64_t coding_seed = 1;
  SimLimits limits;
  bool record_series = true;
};

struct PathReport {
  std::uint64_t packets_sent = 0;       // forward datagrams handed to the link
  std::uint64_t delivered = 0;
  std::uint64_t random_losses = 0;
  std::uint64_t queue_drops = 0;
  std::uint64_t in_flight_at_end = 0;
  std::uint64_t data_packets = 0;       // DATA packets emitted by the sender
  std::uint64_t innovative = 0;
  std::uint64_t dependent = 0;
  std::uint64_t stale = 0;              // for blocks already decoded
  std::uint64_t timeouts = 0;
  double mbps = 0.0;                    // innovative payload throughput
};

struct ThroughputSample {
  double time = 0.0;  // bin start
  std::size_t path = 0;
  double mbps = 0.0;
};

struct StateSample {
  double time = 0.0;
  std::size_t path = 0;
  double tokens = 0.0;
  double p = 0.0;
  double p_long = 0.0;
  double rtt = 0.0;
};

struct TransferReport {
  double duration = 0.0;
  double goodput_mbps = 0.0;
  std::uint64_t stream_length = 0;
  bool byte_identical = false;
  std::vector<PathReport> paths;
  std::vector<ThroughputSample> throughput;
  std::vector<StateSample> state;

  /// One-line JSON record; identical runs give identical strings.
  std::string to_record() const;
  /// time_s,path_id,mbps rows (with header).
  std::string throughput_csv() const;
};

class StallError : public std::runtime_error {
 public:
  StallError(const std::string& what, std::string diagnostic)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic)) {}
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  std::string diagnostic_;
};

/// Simulates handshake, transfer and close. Throws StallError when the
/// connection makes no progress for limits.stall_timeout.
TransferReport run_transfer(const std::vector<PathConfig>& paths, std::span<const std::uint8_t> stream,
                            const TransferOptions& options, const Tracer& tracer = {},
                            const InputRecorder& sender_inputs = {},
                            const InputRecorder& receiver_inputs = {});

}  // namespace ctcp::sim
