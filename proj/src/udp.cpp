#include "ctcp/udp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

namespace ctcp::udp {

namespace {

constexpr double kTickInterval = 0.01;
constexpr int kSocketBuffer = 4 << 20;
constexpr std::size_t kMaxDatagram = 65536;

struct Resolved {
  sockaddr_storage addr{};
  socklen_t len = 0;
  int family = AF_UNSPEC;
};

Resolved resolve(const Endpoint& ep, bool passive, int family = AF_UNSPEC) {
  addrinfo hints{};
  hints.ai_family = family;
  hints.ai_socktype = SOCK_DGRAM;
  hints.ai_flags = passive ? AI_PASSIVE : 0;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  if (const int rc = getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
    throw UdpError("cannot resolve " + ep.to_string() + ": " + gai_strerror(rc));
  }
  Resolved out;
  std::memcpy(&out.addr, res->ai_addr, res->ai_addrlen);
  out.len = res->ai_addrlen;
  out.family = res->ai_family;
  freeaddrinfo(res);
  return out;
}

void set_nonblocking(int fd) {
  const int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw UdpError(std::string("fcntl: ") + std::strerror(errno));
  }
}

int open_bound(const Resolved& local) {
  const int fd = ::socket(local.family, SOCK_DGRAM, 0);
  if (fd < 0) throw UdpError(std::string("socket: ") + std::strerror(errno));
  const int buf = kSocketBuffer;
  setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &buf, sizeof buf);
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&local.addr), local.len) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw UdpError("bind: " + err);
  }
  set_nonblocking(fd);
  return fd;
}

/// Sockets plus the event loop plumbing shared by both roles: poll for
/// datagrams, stamp them with the monotonic clock, send session output.
class Pump {
 public:
  explicit Pump(std::size_t n) : fds_(n, -1), peers_(n), stats_() {
    stats_.datagrams_sent.assign(n, 0);
    stats_.datagrams_received.assign(n, 0);
    stats_.data_packets.assign(n, 0);
  }
  ~Pump() {
    for (int fd : fds_) {
      if (fd >= 0) ::close(fd);
    }
  }
  Pump(const Pump&) = delete;
  Pump& operator=(const Pump&) = delete;

  void adopt(std::size_t path, int fd) { fds_[path] = fd; }
  void set_peer(std::size_t path, const Resolved& r) { peers_[path] = r; }

  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  /// Waits at most `timeout` seconds, then hands every queued datagram to
  /// `deliver(path, bytes, now)` in arrival order per socket.
  template <class F>
  bool wait(double timeout, bool learn_peer, F&& deliver) {
    std::vector<pollfd> pfds;
    for (int fd : fds_) pfds.push_back(pollfd{fd, POLLIN, 0});
    const int ms = std::max(0, static_cast<int>(std::ceil(timeout * 1000.0)));
    const int rc = ::poll(pfds.data(), pfds.size(), ms);
    if (rc < 0) {
      if (errno == EINTR) return false;
      throw UdpError(std::string("poll: ") + std::strerror(errno));
    }
    bool any = false;
    for (std::size_t k = 0; k < pfds.size(); ++k) {
      if (!(pfds[k].revents & POLLIN)) continue;
      for (;;) {
        sockaddr_storage from{};
        socklen_t from_len = sizeof from;
        const ssize_t n = ::recvfrom(fds_[k], buf_.data(), buf_.size(), 0, reinterpret_cast<sockaddr*>(&from),
                                     &from_len);
        if (n < 0) break;  // EAGAIN, or an ICMP error surfaced on the socket
        any = true;
        ++stats_.datagrams_received[k];
        if (n > 0 && buf_[0] == static_cast<std::uint8_t>(wire::MsgType::kData)) ++stats_.data_packets[k];
        if (learn_peer) {
          peers_[k].addr = from;
          peers_[k].len = from_len;
          peers_[k].family = from.ss_family;
        }
        deliver(k, std::span<const std::uint8_t>(buf_.data(), static_cast<std::size_t>(n)), now());
      }
    }
    return any;
  }

  void send(const std::vector<Outgoing>& out) {
    for (const auto& o : out) {
      if (o.path >= fds_.size() || peers_[o.path].len == 0) continue;
      const auto& peer = peers_[o.path];
      const ssize_t n = ::sendto(fds_[o.path], o.bytes.data(), o.bytes.size(), 0,
                                 reinterpret_cast<const sockaddr*>(&peer.addr), peer.len);
      // A full socket buffer drops the datagram; the protocol treats it as a loss.
      if (n < 0) continue;
      ++stats_.datagrams_sent[o.path];
      if (!o.bytes.empty() && o.bytes[0] == static_cast<std::uint8_t>(wire::MsgType::kData)) {
        ++stats_.data_packets[o.path];
      }
    }
  }

  TransferStats& stats() { return stats_; }

 private:
  std::vector<int> fds_;
  std::vector<Resolved> peers_;
  TransferStats stats_;
  std::array<std::uint8_t, kMaxDatagram> buf_{};
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  std::string_view port;
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string_view::npos) throw UdpError("bad address '" + std::string(text) + "'");
    ep.host = std::string(text.substr(1, close - 1));
    const auto rest = text.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') throw UdpError("bad address '" + std::string(text) + "'");
      port = rest.substr(1);
    }
  } else {
    const auto colon = text.rfind(':');
    if (colon != std::string_view::npos && text.find(':') == colon) {
      ep.host = std::string(text.substr(0, colon));
      port = text.substr(colon + 1);
    } else {
      ep.host = std::string(text);  // bare host or bare IPv6 literal
    }
  }
  if (ep.host.empty()) throw UdpError("bad address '" + std::string(text) + "': no host");
  if (!port.empty()) {
    unsigned value = 0;
    for (char c : port) {
      if (c < '0' || c > '9') throw UdpError("bad port in '" + std::string(text) + "'");
      value = value * 10 + static_cast<unsigned>(c - '0');
      if (value > 65535) throw UdpError("bad port in '" + std::string(text) + "'");
    }
    ep.port = static_cast<std::uint16_t>(value);
  }
  return ep;
}

std::string Endpoint::to_string() const {
  const bool v6 = host.find(':') != std::string::npos;
  return (v6 ? "[" + host + "]" : host) + ":" + std::to_string(port);
}

PathSpec PathSpec::parse(std::string_view text) {
  PathSpec spec;
  const auto at = text.find('@');
  spec.remote = Endpoint::parse(text.substr(0, at));
  if (spec.remote.host.empty()) throw UdpError("path '" + std::string(text) + "' has no remote host");
  if (at != std::string_view::npos) {
    const auto local = text.substr(at + 1);
    Endpoint ep = Endpoint::parse(local);
    if (local.find(':') == std::string_view::npos || local.back() == ']') ep.port = 0;
    spec.local = ep;
  }
  return spec;
}

std::pair<int, std::uint16_t> bind_socket(const Endpoint& local) {
  const Resolved r = resolve(local, true);
  const int fd = open_bound(r);
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  std::uint16_t port = 0;
  if (bound.ss_family == AF_INET) port = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  if (bound.ss_family == AF_INET6) port = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
  return {fd, port};
}

TransferStats send_stream(const std::vector<PathSpec>& paths, const Bytes& stream, const SendOptions& options) {
  if (paths.empty()) throw UdpError("send_stream: need at least one path");
  if (stream.empty()) throw UdpError("send_stream: empty stream");

  Pump pump(paths.size());
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const Resolved remote = resolve(paths[k].remote, false);
    const Endpoint local = paths[k].local.value_or(Endpoint{remote.family == AF_INET6 ? "::" : "0.0.0.0", 0});
    pump.adopt(k, open_bound(resolve(local, true, remote.family)));
    pump.set_peer(k, remote);
  }

  SenderSession session(options.params, options.sender, paths.size(), stream, options.seed, options.timing,
                        options.tracer);
  if (options.recorder) session.set_recorder(options.recorder);

  const double start = pump.now();
  session.begin(start);
  pump.send(session.poll(start));
  double next_tick = start + kTickInterval;

  while (!session.done()) {
    pump.wait(std::max(0.0, next_tick - pump.now()), false,
              [&](std::size_t path, std::span<const std::uint8_t> bytes, double t) {
                session.on_datagram(path, bytes, t);
              });
    double now = pump.now();
    if (now >= next_tick) {
      session.on_tick(now);
      next_tick = now + kTickInterval;
    }
    if (session.failed()) throw UdpError("transfer failed: " + session.error());
    if (now - start > options.max_duration) throw UdpError("transfer exceeded max duration");
    pump.send(session.poll(pump.now()));
  }

  auto& stats = pump.stats();
  stats.duration = pump.now() - start;
  stats.bytes = stream.size();
  stats.goodput_mbps = static_cast<double>(stream.size()) * 8.0 / stats.duration / 1e6;
  stats.parse_errors = session.parse_errors();
  return stats;
}

TransferStats receive_on(std::vector<int> fds, Bytes& out, const ReceiveOptions& options) {
  if (fds.empty()) throw UdpError("receive: need at least one socket");
  Pump pump(fds.size());
  for (std::size_t k = 0; k < fds.size(); ++k) {
    set_nonblocking(fds[k]);
    pump.adopt(k, fds[k]);
  }

  ReceiverSession session(options.max_numblks, options.timing, options.tracer);
  if (options.recorder) session.set_recorder(options.recorder);

  out.clear();
  std::optional<double> first_syn;
  bool checked = false;
  double last_heard = pump.now();
  double next_tick = pump.now() + kTickInterval;

  while (!session.done()) {
    const bool heard = pump.wait(std::max(0.0, next_tick - pump.now()), true,
                                 [&](std::size_t path, std::span<const std::uint8_t> bytes, double t) {
                                   session.on_datagram(path, bytes, t);
                                   if (!first_syn && session.receiver()) first_syn = t;
                                 });
    if (first_syn && !checked) {
      checked = true;
      const auto p = *session.params();
      if (options.expect_blksize && *options.expect_blksize != p.blksize) {
        throw UdpError("sender proposed blksize " + std::to_string(p.blksize) + ", expected " +
                       std::to_string(*options.expect_blksize));
      }
      if (options.expect_payload_size && *options.expect_payload_size != p.payload_size) {
        throw UdpError("sender proposed payload size " + std::to_string(p.payload_size) + ", expected " +
                       std::to_string(*options.expect_payload_size));
      }
    }
    const double now = pump.now();
    if (heard) last_heard = now;
    if (now >= next_tick) {
      session.on_tick(now);
      next_tick = now + kTickInterval;
    }
    Bytes fresh = session.take_output();
    out.insert(out.end(), fresh.begin(), fresh.end());
    pump.send(session.poll(now));

    if (!first_syn) {
      if (options.accept_timeout > 0.0 && now > options.accept_timeout) {
        throw UdpError("no connection within accept timeout");
      }
    } else if (now - last_heard > options.idle_timeout) {
      if (session.complete()) break;  // the close went unanswered; the data is all here
      throw UdpError("peer went silent before the transfer completed");
    }
  }

  auto& stats = pump.stats();
  const double end = session.completion_time().value_or(pump.now());
  stats.duration = first_syn ? end - *first_syn : 0.0;
  stats.bytes = out.size();
  stats.goodput_mbps = stats.duration > 0.0 ? static_cast<double>(out.size()) * 8.0 / stats.duration / 1e6 : 0.0;
  stats.parse_errors = session.parse_errors();
  return stats;
}

TransferStats receive_stream(const std::vector<Endpoint>& locals, Bytes& out, const ReceiveOptions& options) {
  std::vector<int> fds;
  try {
    for (const auto& ep : locals) fds.push_back(bind_socket(ep).first);
  } catch (...) {
    for (int fd : fds) ::close(fd);
    throw;
  }
  return receive_on(std::move(fds), out, options);
}

}  // namespace ctcp::udp
