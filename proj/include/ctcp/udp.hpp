#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctcp/params.hpp"
#include "ctcp/session.hpp"
#include "ctcp/trace.hpp"

// CTCP over UDP: one socket per path, one CTCP message per datagram.
namespace ctcp::udp {

inline constexpr std::uint16_t kDefaultPort = 9599;

struct Endpoint {
  std::string host;
  std::uint16_t port = kDefaultPort;

  /// Accepts "host", "host:port", "[v6]" and "[v6]:port".
  static Endpoint parse(std::string_view text);
  std::string to_string() const;
};

/// One path of a sending connection. `local` picks the source interface;
/// unset binds the wildcard address on an ephemeral port.
struct PathSpec {
  Endpoint remote;
  std::optional<Endpoint> local;

  /// "REMOTE" or "REMOTE@LOCAL"; the local port defaults to 0 (ephemeral).
  static PathSpec parse(std::string_view text);
};

class UdpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransferStats {
  double duration = 0.0;       // handshake start to completion, seconds
  double goodput_mbps = 0.0;
  std::uint64_t bytes = 0;
  std::vector<std::uint64_t> datagrams_sent;  // per path
  std::vector<std::uint64_t> datagrams_received;
  std::vector<std::uint64_t> data_packets;    // DATA datagrams sent or received, per path
  std::uint64_t parse_errors = 0;
};

struct SendOptions {
  ProtocolParams params;
  SenderConfig sender;
  SessionTiming timing;
  std::uint64_t seed = 1;
  double max_duration = 3600.0;  // gives up after this many seconds
  Tracer tracer;
  InputRecorder recorder;
};

struct ReceiveOptions {
  std::size_t max_numblks = 0;   // 0 accepts the sender's window
  // When set, a sender proposing different values is refused.
  std::optional<std::size_t> expect_blksize;
  std::optional<std::size_t> expect_payload_size;
  SessionTiming timing;
  double accept_timeout = 0.0;   // seconds to wait for a SYN; 0 waits forever
  double idle_timeout = 30.0;    // seconds without any datagram once connected
  Tracer tracer;
  InputRecorder recorder;
};

/// Sends `stream` over the given paths. Throws UdpError on socket setup
/// failure, handshake timeout or a stalled transfer.
TransferStats send_stream(const std::vector<PathSpec>& paths, const Bytes& stream, const SendOptions& options);

/// Binds one socket per local endpoint, accepts one connection and returns
/// the delivered stream. Path k is the k-th endpoint.
TransferStats receive_stream(const std::vector<Endpoint>& locals, Bytes& out, const ReceiveOptions& options);

/// Like receive_stream but on sockets the caller already bound (takes
/// ownership). Lets tests bind ephemeral ports before starting the sender.
TransferStats receive_on(std::vector<int> fds, Bytes& out, const ReceiveOptions& options);

/// Binds a UDP socket; returns the fd and the bound port.
std::pair<int, std::uint16_t> bind_socket(const Endpoint& local);

}  // namespace ctcp::udp
