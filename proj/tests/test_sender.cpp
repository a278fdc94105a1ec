#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <map>
#include <vector>

#include "ctcp/receiver.hpp"
#include "ctcp/sender.hpp"
#include "oracles.hpp"

using namespace ctcp;

namespace {

std::int64_t ulp_distance(double a, double b) {
  std::int64_t ia, ib;
  std::memcpy(&ia, &a, sizeof a);
  std::memcpy(&ib, &b, sizeof b);
  if (ia < 0) ia = std::numeric_limits<std::int64_t>::min() - ia;
  if (ib < 0) ib = std::numeric_limits<std::int64_t>::min() - ib;
  return ia > ib ? ia - ib : ib - ia;
}

Bytes pattern(std::size_t n, std::uint8_t seed = 1) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(seed + i * 31);
  return b;
}

/// A connected single-owner sender with `blocks` full blocks ready.
Sender make_sender(std::size_t paths = 1, std::size_t blocks = 8, ProtocolParams params = {},
                   SenderConfig cfg = {}) {
  Sender s(params, cfg, paths, 1);
  s.push_stream(pattern(blocks * params.block_bytes()));
  s.close_stream();
  s.start(0.0);
  return s;
}

wire::AckPacket ack_for(std::size_t path, SeqNo seq, BlockNo currblk = 0, std::uint16_t dof = 0) {
  return wire::AckPacket{static_cast<std::uint8_t>(path), seq, currblk, dof};
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss estimator

TEST_CASE("estimator: one success shrinks p by (1-mu)") { CHECK(loss_ewma(0.5, 0.1, 0) == doctest::Approx(0.45)); }

TEST_CASE("estimator: one loss then a success") { CHECK(loss_ewma(0.5, 0.1, 1) == doctest::Approx(0.505)); }

TEST_CASE("estimator: batched update matches the sequential oracle") {
  SeededRng rng(17);
  std::int64_t worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const double p = rng.uniform();
    const double mu = rng.uniform();
    for (unsigned losses = 0; losses <= 50; ++losses) {
      worst = std::max(worst, ulp_distance(loss_ewma(p, mu, losses), oracle::sequential_ewma(p, mu, losses)));
    }
  }
  MESSAGE("worst ULP distance " << worst);
  CHECK(worst <= 10);
}

TEST_CASE("estimator: ACK updates p, p_long, p_stdlong and seqno_una") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.tokens = 10;
  for (int i = 0; i < 5; ++i) REQUIRE(s.try_transmit(0, 0.0));
  ps.p = 0.5;
  ps.p_long = 0.2;
  ps.p_stdlong = 0.01;
  s.on_ack(ack_for(0, 2), 0.1);  // seqnos 0 and 1 lost
  const auto& after = s.path(0);
  CHECK(after.p == doctest::Approx(oracle::sequential_ewma(0.5, 0.1, 2)));
  CHECK(after.p_long == doctest::Approx(oracle::sequential_ewma(0.2, 0.01, 2)));
  CHECK(after.p_stdlong == doctest::Approx(0.01 * 0.99 + 0.01 * std::abs(after.p - after.p_long)));
  CHECK(after.seqno_una == 3);
  CHECK(after.rto == doctest::Approx(s.config().gamma * after.rtt));
}

TEST_CASE("estimator: RTT sample comes from the send-time log") {
  Sender s = make_sender();
  REQUIRE(s.try_transmit(0, 1.0));
  s.on_ack(ack_for(0, 0), 1.2);
  CHECK(s.path(0).rtt == doctest::Approx(0.5 * 0.875 + 0.2 * 0.125));
}

TEST_CASE("estimator: stale and unknown ACKs are ignored") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 10;
  for (int i = 0; i < 4; ++i) REQUIRE(s.try_transmit(0, 0.0));
  s.on_ack(ack_for(0, 99), 0.1);  // never sent
  CHECK(s.path(0).acks_processed == 0);
  CHECK(s.path(0).seqno_una == 0);
  s.on_ack(ack_for(5, 0), 0.1);  // no such path
  CHECK(s.path(0).acks_processed == 0);
}

TEST_CASE("estimator: reordered ACK below seqno_una refreshes RTT but not loss state") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 10;
  for (int i = 0; i < 4; ++i) REQUIRE(s.try_transmit(0, 0.0));
  s.on_ack(ack_for(0, 3), 0.1);
  const double p = s.path(0).p;
  s.on_ack(ack_for(0, 1), 0.11);
  CHECK(s.path(0).p == p);
  CHECK(s.path(0).seqno_una == 4);
  CHECK(s.path(0).acks_processed == 2);
}

// ---------------------------------------------------------------------------
// Congestion control

TEST_CASE("cc: slow start crosses the threshold into avoidance") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.tokens = 10;
  ps.ss_threshold = 10.5;
  REQUIRE(s.try_transmit(0, 0.0));
  s.on_ack(ack_for(0, 0), 0.1);
  CHECK(s.path(0).tokens == doctest::Approx(11));
  CHECK(s.path(0).mode == CcMode::kCongestionAvoidance);
}

TEST_CASE("cc: no queueing delay grows tokens by 1/tokens") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.mode = CcMode::kCongestionAvoidance;
  ps.tokens = 8;
  ps.rtt = 0.1;
  s.on_ack_cc(0, 0.1);
  CHECK(s.path(0).tokens == doctest::Approx(8.125));
}

TEST_CASE("cc: heavy queueing delay shrinks tokens by 1/tokens") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.mode = CcMode::kCongestionAvoidance;
  ps.tokens = 8;
  ps.rtt = 0.1;
  s.on_ack_cc(0, 0.2);  // delta = 0.5 > beta
  CHECK(s.path(0).tokens == doctest::Approx(7.875));
}

TEST_CASE("cc: loss spike removes (p - p_long)/2") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.mode = CcMode::kCongestionAvoidance;
  ps.tokens = 8;
  ps.rtt = 0.1;
  ps.p = 0.30;
  ps.p_long = 0.10;
  ps.p_stdlong = 0.05;
  s.on_ack_cc(0, 0.1 / 0.9);  // delta = 0.1, between the Vegas thresholds
  CHECK(s.path(0).tokens == doctest::Approx(7.9));
}

TEST_CASE("cc: tokens never fall below the floor") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.mode = CcMode::kCongestionAvoidance;
  ps.tokens = 1.0;
  ps.rtt = 0.1;
  ps.p = 1.0;
  ps.p_long = 0.0;
  ps.p_stdlong = 0.0;
  s.on_ack_cc(0, 1.0);
  CHECK(s.path(0).tokens == s.config().token_floor);
}

TEST_CASE("cc: timeout resets tokens and doubles rto") {
  Sender s = make_sender();
  auto& ps = s.mutable_path(0);
  ps.tokens = 40;
  REQUIRE(s.try_transmit(0, 0.0));
  const double rto = s.path(0).rto;
  s.on_tick(0, rto * 0.99);
  CHECK(s.path(0).timeouts == 0);
  s.on_tick(0, rto + 0.01);
  CHECK(s.path(0).timeouts == 1);
  CHECK(s.path(0).tokens == s.config().initial_tokens);
  CHECK(s.path(0).rto == doctest::Approx(2 * rto));
  CHECK(s.path(0).ss_threshold == doctest::Approx(20));
  CHECK(s.path(0).mode == CcMode::kSlowStart);
  CHECK(s.path(0).seqno_una == s.path(0).seqno_nxt);
}

TEST_CASE("cc: consecutive timeouts without an ACK quadruple rto") {
  Sender s = make_sender();
  REQUIRE(s.try_transmit(0, 0.0));
  const double rto = s.path(0).rto;
  s.on_tick(0, rto + 0.01);
  REQUIRE(s.try_transmit(0, rto + 0.02));
  s.on_tick(0, rto + 0.02 + 2 * rto + 0.01);
  CHECK(s.path(0).timeouts == 2);
  CHECK(s.path(0).rto == doctest::Approx(4 * rto));
}

TEST_CASE("cc: ACKs for packets sent before a timeout have no effect") {
  Sender s = make_sender();
  REQUIRE(s.try_transmit(0, 0.0));
  s.on_tick(0, s.path(0).rto + 0.01);
  const auto before = s.path(0);
  s.on_ack(ack_for(0, 0), 2.0);
  CHECK(s.path(0).acks_processed == before.acks_processed);
  CHECK(s.path(0).tokens == before.tokens);
  CHECK(s.path(0).rtt == before.rtt);
}

TEST_CASE("cc: an idle path never times out") {
  Sender s = make_sender();
  s.on_tick(0, 100.0);
  CHECK(s.path(0).timeouts == 0);
}

// ---------------------------------------------------------------------------
// Scheduling

TEST_CASE("schedule_single: fresh connection picks currblk") {
  Sender s = make_sender();
  CHECK(s.schedule_single(0, 0.0) == 0u);
}

TEST_CASE("schedule_single: currblk covered exactly moves on") {
  Sender s = make_sender();
  s.set_window_state(0, 5);
  s.mutable_path(0).tokens = 1000;
  for (int i = 0; i < 27; ++i) REQUIRE(s.try_transmit(0, 0.0)->blockno == 0);
  CHECK(s.schedule_single(0, 0.0) == 1u);
}

TEST_CASE("schedule_single: half-lossy path keeps covering currblk") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 1000;
  s.mutable_path(0).p = 0.5;
  for (int i = 0; i < 63; ++i) REQUIRE(s.try_transmit(0, 0.0)->blockno == 0);
  CHECK(s.schedule_single(0, 0.0) == 0u);  // 31.5 < 32
  REQUIRE(s.try_transmit(0, 0.0)->blockno == 0);
  CHECK(s.schedule_single(0, 0.0) == 1u);
}

TEST_CASE("schedule_single: packets older than 1.5 RTT stop counting") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 1000;
  for (int i = 0; i < 32; ++i) REQUIRE(s.try_transmit(0, 0.0));
  CHECK(s.schedule_single(0, 0.0) == 1u);
  const double horizon = 1.5 * s.path(0).rtt;
  CHECK(s.schedule_single(0, horizon * 0.99) == 1u);
  CHECK(s.schedule_single(0, horizon) == 0u);
}

TEST_CASE("schedule_single: whole window covered returns none and keeps the credit") {
  ProtocolParams params{4, 2, 16};
  Sender s = make_sender(1, 4, params);
  s.mutable_path(0).tokens = 100;
  for (int i = 0; i < 8; ++i) REQUIRE(s.try_transmit(0, 0.0));
  CHECK_FALSE(s.schedule_single(0, 0.0).has_value());
  const double avail = s.path(0).available();
  CHECK_FALSE(s.try_transmit(0, 0.0).has_value());
  CHECK(s.path(0).available() == avail);
}

TEST_CASE("schedule_single: never selects a block whose expected arrivals meet its need") {
  SeededRng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    ProtocolParams params{1 + rng.next() % 16, 1 + rng.next() % 6, 8};
    Sender s = make_sender(1, 10, params);
    auto& ps = s.mutable_path(0);
    ps.tokens = 1e6;
    ps.p = rng.uniform() * 0.9;
    ps.rtt = 0.05 + rng.uniform();
    s.set_window_state(0, rng.next() % params.blksize);
    double now = 0.0;
    for (int step = 0; step < 80; ++step) {
      now += rng.uniform() * 0.05;
      const auto pick = s.schedule_single(0, now);
      // Independent recount of onfly from the send log.
      const auto& path = s.path(0);
      std::map<BlockNo, double> onfly;
      for (SeqNo q = path.seqno_una; q < path.seqno_nxt; ++q) {
        const auto* rec = path.lookup(q);
        if (rec && now < rec->time + 1.5 * path.rtt) onfly[rec->blkno] += 1;
      }
      if (pick) {
        const double target = static_cast<double>(s.block(*pick)->fill_count());
        const double need = *pick == s.currblk() ? target - static_cast<double>(s.currdof()) : target;
        REQUIRE((1.0 - path.p) * onfly[*pick] < need);
      }
      if (!s.try_transmit(0, now)) break;
    }
  }
}

TEST_CASE("schedule_multi: fresh single path picks currblk under either guard") {
  for (auto guard : {CurrblkGuard::kNeeded, CurrblkGuard::kLiteral}) {
    SenderConfig cfg;
    cfg.scheduler = SchedulerKind::kMultiPath;
    cfg.currblk_guard = guard;
    Sender s = make_sender(1, 8, {}, cfg);
    CHECK(s.schedule_multi(0, 0.0) == 0u);
  }
}

TEST_CASE("schedule_multi: slow path skips a block the fast path already covers") {
  for (auto guard : {CurrblkGuard::kNeeded, CurrblkGuard::kLiteral}) {
    SenderConfig cfg;
    cfg.scheduler = SchedulerKind::kMultiPath;
    cfg.currblk_guard = guard;
    Sender s = make_sender(2, 8, {}, cfg);
    s.mutable_path(0).rtt = 0.05;
    s.mutable_path(1).rtt = 0.5;
    s.mutable_path(0).tokens = 1000;
    for (int i = 0; i < 32; ++i) REQUIRE(s.try_transmit(0, 0.0)->blockno == 0);
    CHECK(s.schedule_multi(1, 0.0) == 1u);
  }
}

TEST_CASE("schedule_multi: fully covered window returns none and keeps tokens") {
  SenderConfig cfg;
  cfg.scheduler = SchedulerKind::kMultiPath;
  ProtocolParams params{4, 2, 16};
  Sender s = make_sender(2, 4, params, cfg);
  s.mutable_path(0).tokens = 100;
  s.mutable_path(1).tokens = 5;
  for (int i = 0; i < 8; ++i) REQUIRE(s.try_transmit(0, 0.0));
  CHECK_FALSE(s.schedule_multi(1, 0.0).has_value());
  CHECK_FALSE(s.try_transmit(1, 0.0).has_value());
  CHECK(s.path(1).tokens == 5);
  CHECK(s.path(1).available() == 5);
}

TEST_CASE("schedule_multi: the needed-dofs guard stops redundant currblk sends on one path") {
  SenderConfig cfg;
  cfg.scheduler = SchedulerKind::kMultiPath;
  Sender s = make_sender(1, 8, {}, cfg);
  s.mutable_path(0).tokens = 1000;
  for (int i = 0; i < 32; ++i) REQUIRE(s.try_transmit(0, 0.0)->blockno == 0);
  CHECK(s.schedule_multi(0, 0.0) == 1u);
  CHECK(s.schedule_multi(0, 0.0) == s.schedule_single(0, 0.0));
}

// ---------------------------------------------------------------------------
// Transmission and stream

TEST_CASE("try_transmit: a fraction of a token is not enough") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 0.7;
  CHECK_FALSE(s.try_transmit(0, 0.0).has_value());
  CHECK(s.path(0).seqno_nxt == 0);
}

TEST_CASE("try_transmit: fresh connection sends systematic index 0 and spends one credit") {
  Sender s = make_sender();
  s.mutable_path(0).tokens = 3;
  const auto pkt = s.try_transmit(0, 0.0);
  REQUIRE(pkt);
  CHECK(pkt->blockno == 0);
  CHECK(pkt->seqno == 0);
  REQUIRE(std::holds_alternative<wire::Systematic>(pkt->encoding));
  CHECK(std::get<wire::Systematic>(pkt->encoding).index == 0);
  CHECK(s.path(0).available() == doctest::Approx(2));
  CHECK(s.path(0).lookup(0)->blkno == 0);
}

TEST_CASE("try_transmit: encode index is per block across paths") {
  SenderConfig cfg;
  cfg.scheduler = SchedulerKind::kMultiPath;
  ProtocolParams params{4, 4, 8};
  Sender s = make_sender(2, 4, params, cfg);
  s.mutable_path(0).tokens = 2;
  s.mutable_path(1).tokens = 3;
  std::vector<std::uint16_t> indices;
  for (int i = 0; i < 2; ++i) indices.push_back(std::get<wire::Systematic>(s.try_transmit(0, 0.0)->encoding).index);
  for (int i = 0; i < 2; ++i) indices.push_back(std::get<wire::Systematic>(s.try_transmit(1, 0.0)->encoding).index);
  CHECK(indices == std::vector<std::uint16_t>{0, 1, 2, 3});
}

TEST_CASE("push_stream: block segmentation and padding") {
  ProtocolParams params{4, 8, 16};
  {
    Sender s(params, {}, 1, 1);
    s.push_stream({});
    s.close_stream();
    CHECK(s.block_count() == 0);
    CHECK(s.finished());
  }
  {
    Sender s(params, {}, 1, 1);
    s.push_stream(pattern(params.block_bytes()));
    s.close_stream();
    CHECK(s.block_count() == 1);
    REQUIRE(s.block(0));
    CHECK(s.block(0)->full());
  }
  {
    Sender s(params, {}, 1, 1);
    const Bytes data = pattern(params.block_bytes() + 1, 9);
    s.push_stream(data);
    CHECK(s.block_count() == 2);
    s.close_stream();
    REQUIRE(s.block(1));
    CHECK(s.block(1)->fill_count() == 1);
    const Bytes& last = s.block(1)->packets[0];
    CHECK(last[0] == data.back());
    CHECK(std::all_of(last.begin() + 1, last.end(), [](auto v) { return v == 0; }));
  }
  {
    Sender s(params, {}, 1, 1);
    s.close_stream();
    CHECK_THROWS_AS(s.push_stream(pattern(3)), std::logic_error);
  }
}

TEST_CASE("push_stream: byte-at-a-time pushes segment like one push") {
  ProtocolParams params{3, 8, 5};
  const Bytes data = pattern(47, 3);
  Sender whole(params, {}, 1, 1), pieces(params, {}, 1, 1);
  whole.push_stream(data);
  for (auto b : data) pieces.push_stream(std::span<const std::uint8_t>(&b, 1));
  whole.close_stream();
  pieces.close_stream();
  REQUIRE(whole.block_count() == pieces.block_count());
  for (BlockNo b = 0; b < whole.block_count(); ++b) CHECK(whole.block(b)->packets == pieces.block(b)->packets);
}

TEST_CASE("window: currblk advances on ACK and frees blocks") {
  ProtocolParams params{4, 2, 8};
  Sender s = make_sender(1, 5, params);
  s.mutable_path(0).tokens = 100;
  REQUIRE(s.try_transmit(0, 0.0));
  CHECK(s.blocks_held() == 2);
  s.on_ack(ack_for(0, 0, 2, 1), 0.1);
  CHECK(s.currblk() == 2);
  CHECK(s.currdof() == 1);
  CHECK(s.block(1) == nullptr);
  CHECK(s.block(3) != nullptr);
  CHECK(s.blocks_held() == 2);
  // An older ACK arriving late never moves currblk back.
  REQUIRE(s.try_transmit(0, 0.1));
  s.on_ack(ack_for(0, 1, 1, 3), 0.2);
  CHECK(s.currblk() == 2);
  CHECK(s.currdof() == 1);
}

// ---------------------------------------------------------------------------
// Whole-connection properties against a lossy in-memory link.

namespace {

bool change_is_explained(const TokenChange& c, const SenderConfig& cfg) {
  auto clamp = [&](double v) { return std::max(v, cfg.token_floor); };
  switch (c.reason) {
    case TokenReason::kSlowStart: return c.after == clamp(c.before + 1.0);
    case TokenReason::kAvoidanceUp: return c.after == clamp(c.before + 1.0 / c.before);
    case TokenReason::kAvoidanceDown: return c.after == clamp(c.before - 1.0 / c.before);
    case TokenReason::kLossSpike: return c.after <= c.before && c.after >= cfg.token_floor;
    case TokenReason::kTimeout: return c.after == clamp(cfg.initial_tokens);
    case TokenReason::kTransmit: return c.after == doctest::Approx(c.before - 1.0);
  }
  return false;
}

}  // namespace

TEST_CASE("properties: token mutation log, per-path independence, monotone currblk") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    ProtocolParams params{8, 4, 16};
    SenderConfig cfg;
    cfg.scheduler = seed % 2 ? SchedulerKind::kMultiPath : SchedulerKind::kSinglePath;
    const std::size_t n = 1 + seed % 3;
    const Bytes data = pattern(40 * params.block_bytes() + 5, static_cast<std::uint8_t>(seed));
    Sender s(params, cfg, n, seed);
    s.push_stream(data);
    s.close_stream();
    s.start(0.0);
    Receiver r(params, data.size());

    std::vector<TokenChange> log;
    s.set_token_observer([&](const TokenChange& c) { log.push_back(c); });

    SeededRng net(seed * 77);
    struct InFlight {
      double at;
      wire::AckPacket ack;
    };
    std::vector<InFlight> acks;
    Bytes delivered;
    BlockNo last_currblk = 0;

    auto snapshot = [&] {
      std::vector<double> t;
      for (std::size_t k = 0; k < n; ++k) t.push_back(s.path(k).tokens);
      return t;
    };
    auto check_others = [&](const std::vector<double>& before, std::size_t touched) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k != touched) REQUIRE(std::memcmp(&before[k], &s.path(k).tokens, sizeof(double)) == 0);
      }
    };

    double now = 0.0;
    int guard = 0;
    while (!s.finished()) {
      REQUIRE(++guard < 200000);
      now += 0.002;
      for (std::size_t k = 0; k < n; ++k) {
        for (;;) {
          const auto before = snapshot();
          auto pkt = s.try_transmit(k, now);
          check_others(before, k);
          if (!pkt) break;
          if (net.uniform() < 0.1) continue;  // lost
          const auto ack = r.on_data(*pkt, now);
          const Bytes fresh = r.read_delivered();
          delivered.insert(delivered.end(), fresh.begin(), fresh.end());
          acks.push_back({now + 0.02 + 0.03 * static_cast<double>(k) + net.uniform() * 0.01, ack});
        }
      }
      std::vector<InFlight> later;
      for (const auto& a : acks) {
        if (a.at > now) {
          later.push_back(a);
          continue;
        }
        const auto before = snapshot();
        s.on_ack(a.ack, now);
        check_others(before, a.ack.path_id);
        const auto& ps = s.path(a.ack.path_id);
        REQUIRE(ps.rto == doctest::Approx(cfg.gamma * ps.rtt));
        REQUIRE(s.currblk() >= last_currblk);
        REQUIRE(s.currdof() <= params.blksize);
        last_currblk = s.currblk();
      }
      acks.swap(later);
      for (std::size_t k = 0; k < n; ++k) {
        const auto before = snapshot();
        s.on_tick(k, now);
        check_others(before, k);
      }
    }
    CHECK(delivered == data);

    // Replay the log: every token value is explained by a logged mutation.
    std::vector<double> tokens(n, cfg.initial_tokens);
    for (const auto& c : log) {
      REQUIRE(change_is_explained(c, cfg));
      if (c.reason == TokenReason::kTransmit) continue;
      REQUIRE(c.before == tokens[c.path]);
      tokens[c.path] = c.after;
    }
    for (std::size_t k = 0; k < n; ++k) CHECK(tokens[k] == s.path(k).tokens);
  }
}
