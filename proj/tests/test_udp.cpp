#include <doctest.h>

#include <chrono>
#include <future>
#include <thread>

#include <unistd.h>

#include "ctcp/experiment.hpp"
#include "ctcp/udp.hpp"

using namespace ctcp;
using namespace ctcp::udp;

namespace {

struct Loopback {
  TransferStats sent;
  TransferStats received;
  Bytes out;
};

Loopback transfer(const Bytes& stream, std::size_t num_paths, SendOptions snd = {}) {
  std::vector<int> fds;
  std::vector<PathSpec> paths;
  for (std::size_t k = 0; k < num_paths; ++k) {
    const auto [fd, port] = bind_socket(Endpoint{"127.0.0.1", 0});
    fds.push_back(fd);
    paths.push_back(PathSpec{Endpoint{"127.0.0.1", port}, std::nullopt});
  }
  Loopback lb;
  ReceiveOptions rcv;
  rcv.accept_timeout = 20.0;
  rcv.idle_timeout = 20.0;
  auto fut = std::async(std::launch::async, [&] { return receive_on(fds, lb.out, rcv); });
  snd.max_duration = 60.0;
  lb.sent = send_stream(paths, stream, snd);
  lb.received = fut.get();
  return lb;
}

}  // namespace

TEST_CASE("udp: endpoint and path parsing") {
  auto e = Endpoint::parse("10.0.0.1:7000");
  CHECK(e.host == "10.0.0.1");
  CHECK(e.port == 7000);
  e = Endpoint::parse("example.org");
  CHECK(e.port == kDefaultPort);
  e = Endpoint::parse("[::1]:81");
  CHECK(e.host == "::1");
  CHECK(e.port == 81);
  CHECK(e.to_string() == "[::1]:81");
  CHECK(Endpoint::parse("[fe80::1]").port == kDefaultPort);
  CHECK_THROWS_AS(Endpoint::parse("host:notaport"), UdpError);
  CHECK_THROWS_AS(Endpoint::parse("host:70000"), UdpError);
  CHECK_THROWS_AS(Endpoint::parse(""), UdpError);

  const auto p = PathSpec::parse("10.0.0.2:9000@192.168.1.5");
  CHECK(p.remote.port == 9000);
  REQUIRE(p.local);
  CHECK(p.local->host == "192.168.1.5");
  CHECK(p.local->port == 0);
  CHECK_FALSE(PathSpec::parse("10.0.0.2").local);
}

TEST_CASE("udp: one megabyte over one loopback path") {
  const Bytes stream = sim::make_stream(1 << 20, 7);
  const auto lb = transfer(stream, 1);
  CHECK(lb.out == stream);
  CHECK(lb.sent.bytes == stream.size());
  CHECK(lb.received.bytes == stream.size());
  CHECK(lb.sent.goodput_mbps > 0.0);
  CHECK(lb.received.parse_errors == 0);
}

TEST_CASE("udp: two loopback paths both carry data") {
  const Bytes stream = sim::make_stream(2 << 20, 8);
  SendOptions snd;
  snd.sender.scheduler = SchedulerKind::kMultiPath;
  const auto lb = transfer(stream, 2, snd);
  CHECK(lb.out == stream);
  REQUIRE(lb.received.data_packets.size() == 2);
  CHECK(lb.received.data_packets[0] > 0);
  CHECK(lb.received.data_packets[1] > 0);
  CHECK(lb.sent.data_packets[0] > 0);
  CHECK(lb.sent.data_packets[1] > 0);
}

TEST_CASE("udp: unreachable remote fails the handshake within the retry budget") {
  // A bound socket that never answers stands in for a dead host.
  const auto [fd, port] = bind_socket(Endpoint{"127.0.0.1", 0});
  SendOptions snd;
  snd.timing.syn_interval = 0.05;
  snd.timing.max_syn_attempts = 5;
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_WITH_AS(send_stream({PathSpec{Endpoint{"127.0.0.1", port}, std::nullopt}}, Bytes(1000, 1), snd),
                       doctest::Contains("handshake"), UdpError);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed < 2.0);
  ::close(fd);
}

TEST_CASE("udp: receiver refuses mismatched parameters") {
  const auto [fd, port] = bind_socket(Endpoint{"127.0.0.1", 0});
  Bytes out;
  ReceiveOptions rcv;
  rcv.expect_blksize = 16;
  rcv.accept_timeout = 5.0;
  auto fut = std::async(std::launch::async, [&] { return receive_on({fd}, out, rcv); });
  SendOptions snd;
  snd.timing.syn_interval = 0.05;
  snd.timing.max_syn_attempts = 10;
  CHECK_THROWS_AS(send_stream({PathSpec{Endpoint{"127.0.0.1", port}, std::nullopt}}, Bytes(1000, 1), snd),
                  UdpError);
  CHECK_THROWS_AS(fut.get(), UdpError);
}

TEST_CASE("udp: a live transfer replays through fresh sessions") {
  const Bytes stream = sim::make_stream(300000, 9);
  std::vector<SessionInput> snd_in;
  SendOptions snd;
  snd.recorder = [&](const SessionInput& i) { snd_in.push_back(i); };
  const auto lb = transfer(stream, 1, snd);
  REQUIRE(lb.out == stream);

  SenderSession again(snd.params, snd.sender, 1, stream, snd.seed, snd.timing);
  const auto out = replay(again, std::span<const SessionInput>(snd_in));
  CHECK(again.done());
  std::uint64_t data = 0;
  for (const auto& o : out) data += o.bytes[0] == static_cast<std::uint8_t>(wire::MsgType::kData);
  CHECK(data == lb.sent.data_packets[0]);
}
