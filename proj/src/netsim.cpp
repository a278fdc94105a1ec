#include "ctcp/netsim.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace ctcp::sim {

namespace {

enum class EventKind { kDeliverData, kDeliverAck, kClockTick, kTransmitOpportunity };

struct SimEvent {
  double time = 0.0;
  std::uint64_t order = 0;  // insertion order breaks ties
  EventKind kind = EventKind::kClockTick;
  std::size_t path = 0;
  Bytes payload;
};

struct Later {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.order > b.order;
  }
};

class EventQueue {
 public:
  void push(double time, EventKind kind, std::size_t path = 0, Bytes payload = {}) {
    heap_.push_back(SimEvent{time, next_++, kind, path, std::move(payload)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }
  bool empty() const { return heap_.empty(); }
  SimEvent pop() {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    SimEvent e = std::move(heap_.back());
    heap_.pop_back();
    return e;
  }
  const std::vector<SimEvent>& pending() const { return heap_; }

 private:
  std::vector<SimEvent> heap_;
  std::uint64_t next_ = 0;
};

/// Forward direction: finite FIFO drained at the path bandwidth, then a
/// Bernoulli drop and the propagation delay.
class ForwardLink {
 public:
  ForwardLink(const PathConfig& cfg, PathReport& report)
      : cfg_(cfg),
        loss_rng_(splitmix64(cfg.seed)),
        jitter_rng_(splitmix64(cfg.seed ^ 0x6A09E667F3BCC908ull)),
        report_(report) {}

  std::optional<double> enqueue(double now, std::size_t bytes) {
    ++report_.packets_sent;
    while (!departures_.empty() && departures_.front() <= now) departures_.pop_front();
    if (departures_.size() >= cfg_.queue_capacity) {
      ++report_.queue_drops;
      return std::nullopt;
    }
    const double depart = std::max(now, busy_until_) + static_cast<double>(bytes) * 8.0 / cfg_.bandwidth;
    busy_until_ = depart;
    departures_.push_back(depart);
    if (loss_draw(cfg_, loss_rng_)) {
      ++report_.random_losses;
      return std::nullopt;
    }
    return depart + cfg_.one_way_delay + jitter_rng_.exponential(cfg_.jitter);
  }

 private:
  PathConfig cfg_;
  SeededRng loss_rng_;
  SeededRng jitter_rng_;
  double busy_until_ = 0.0;
  std::deque<double> departures_;
  PathReport& report_;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void PathConfig::validate() const {
  if (!(one_way_delay >= 0.0)) throw std::invalid_argument("path: delay must be >= 0");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("path: bandwidth must be > 0");
  if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) throw std::invalid_argument("path: loss must be in [0, 1]");
  if (!(ack_loss_rate >= 0.0 && ack_loss_rate <= 1.0)) throw std::invalid_argument("path: ack loss must be in [0, 1]");
  if (queue_capacity < 1) throw std::invalid_argument("path: queue capacity must be >= 1");
  if (!(jitter >= 0.0)) throw std::invalid_argument("path: jitter must be >= 0");
}

bool loss_draw(const PathConfig& path, SeededRng& rng) { return rng.bernoulli(path.loss_rate); }

std::string TransferReport::to_record() const {
  nlohmann::ordered_json j;
  j["duration_s"] = duration;
  j["goodput_mbps"] = goodput_mbps;
  j["stream_length"] = stream_length;
  j["byte_identical"] = byte_identical;
  auto& arr = j["paths"] = nlohmann::ordered_json::array();
  for (const auto& p : paths) {
    arr.push_back({{"sent", p.packets_sent},
                   {"delivered", p.delivered},
                   {"random_losses", p.random_losses},
                   {"queue_drops", p.queue_drops},
                   {"in_flight_at_end", p.in_flight_at_end},
                   {"data_packets", p.data_packets},
                   {"innovative", p.innovative},
                   {"dependent", p.dependent},
                   {"stale", p.stale},
                   {"timeouts", p.timeouts},
                   {"mbps", p.mbps}});
  }
  return j.dump();
}

std::string TransferReport::throughput_csv() const {
  std::string out = "time_s,path_id,mbps\n";
  for (const auto& s : throughput) {
    out += fmt_double(s.time) + "," + std::to_string(s.path) + "," + fmt_double(s.mbps) + "\n";
  }
  return out;
}

TransferReport run_transfer(const std::vector<PathConfig>& paths, std::span<const std::uint8_t> stream,
                            const TransferOptions& options, const Tracer& tracer,
                            const InputRecorder& sender_inputs, const InputRecorder& receiver_inputs) {
  if (paths.empty()) throw std::invalid_argument("run_transfer: need at least one path");
  if (stream.empty()) throw std::invalid_argument("run_transfer: empty stream");
  for (const auto& p : paths) p.validate();

  const std::size_t n = paths.size();
  const SimLimits& lim = options.limits;

  TransferReport report;
  report.stream_length = stream.size();
  report.paths.resize(n);

  std::vector<ForwardLink> links;
  std::vector<SeededRng> ack_rngs;
  links.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    links.emplace_back(paths[k], report.paths[k]);
    ack_rngs.emplace_back(splitmix64(paths[k].seed ^ 0xBB67AE8584CAA73Bull));
  }

  SenderSession sender(options.params, options.sender, n, Bytes(stream.begin(), stream.end()),
                       options.coding_seed, options.timing, tracer);
  ReceiverSession receiver(0, options.timing, tracer);
  if (sender_inputs) sender.set_recorder(sender_inputs);
  if (receiver_inputs) receiver.set_recorder(receiver_inputs);

  EventQueue events;
  Bytes received;
  received.reserve(stream.size());

  std::map<std::pair<std::size_t, std::size_t>, double> bins;  // (bin, path) -> innovative bytes
  bool opportunity_pending = false;

  double last_progress = 0.0;
  std::uint64_t progress_marker = 0;
  double next_sample = 0.0;

  auto send_forward = [&](double now, std::vector<Outgoing> out) {
    for (auto& o : out) {
      if (!o.bytes.empty() && o.bytes[0] == static_cast<std::uint8_t>(wire::MsgType::kData)) {
        ++report.paths[o.path].data_packets;
      }
      if (auto at = links[o.path].enqueue(now, o.bytes.size())) {
        events.push(*at, EventKind::kDeliverData, o.path, std::move(o.bytes));
      }
    }
  };
  auto send_reverse = [&](double now, std::vector<Outgoing> out) {
    for (auto& o : out) {
      if (ack_rngs[o.path].bernoulli(paths[o.path].ack_loss_rate)) continue;
      events.push(now + paths[o.path].one_way_delay, EventKind::kDeliverAck, o.path, std::move(o.bytes));
    }
  };
  auto want_opportunity = [&](double now) {
    if (!opportunity_pending) {
      events.push(now, EventKind::kTransmitOpportunity);
      opportunity_pending = true;
    }
  };
  auto diagnostic = [&](double now) {
    std::ostringstream os;
    os << "t=" << now << " sender_state=" << static_cast<int>(sender.state())
       << " receiver_state=" << static_cast<int>(receiver.state());
    if (const auto* s = sender.sender()) {
      os << " currblk=" << s->currblk() << " currdof=" << s->currdof();
      for (std::size_t k = 0; k < s->num_paths(); ++k) {
        const auto& ps = s->path(k);
        os << " | path" << k << " tokens=" << ps.tokens << " p=" << ps.p << " rtt=" << ps.rtt
           << " rto=" << ps.rto << " una=" << ps.seqno_una << " nxt=" << ps.seqno_nxt;
      }
    }
    if (const auto* r = receiver.receiver()) {
      os << " | rcv ack_currblk=" << r->ack_currblk() << " ack_currdof=" << r->ack_currdof()
         << " delivered=" << r->delivered_bytes();
    }
    if (!sender.error().empty()) os << " | error: " << sender.error();
    return os.str();
  };

  sender.begin(0.0);
  send_forward(0.0, sender.poll(0.0));
  events.push(lim.tick_interval, EventKind::kClockTick);

  double now = 0.0;
  while (!events.empty()) {
    SimEvent ev = events.pop();
    now = ev.time;
    if (now > lim.max_time) throw StallError("simulation exceeded max_time", diagnostic(now));

    switch (ev.kind) {
      case EventKind::kDeliverData: {
        ++report.paths[ev.path].delivered;
        const Receiver* r = receiver.receiver();
        std::uint64_t before = 0;
        if (r && ev.path < r->path_stats().size()) before = r->path_stats()[ev.path].innovative;
        receiver.on_datagram(ev.path, ev.payload, now);
        r = receiver.receiver();
        if (r && ev.path < r->path_stats().size() && r->path_stats()[ev.path].innovative > before) {
          const auto bin = static_cast<std::size_t>(now / lim.sample_interval);
          bins[{bin, ev.path}] += static_cast<double>(r->path_stats()[ev.path].innovative - before) *
                                  static_cast<double>(options.params.payload_size);
        }
        Bytes fresh = receiver.take_output();
        received.insert(received.end(), fresh.begin(), fresh.end());
        send_reverse(now, receiver.poll(now));
        break;
      }
      case EventKind::kDeliverAck:
        sender.on_datagram(ev.path, ev.payload, now);
        want_opportunity(now);
        break;
      case EventKind::kTransmitOpportunity:
        opportunity_pending = false;
        send_forward(now, sender.poll(now));
        break;
      case EventKind::kClockTick: {
        sender.on_tick(now);
        receiver.on_tick(now);
        send_reverse(now, receiver.poll(now));
        want_opportunity(now);

        if (options.record_series && now >= next_sample) {
          if (const auto* s = sender.sender()) {
            for (std::size_t k = 0; k < n; ++k) {
              const auto& ps = s->path(k);
              report.state.push_back(StateSample{now, k, ps.tokens, ps.p, ps.p_long, ps.rtt});
            }
          }
          next_sample += lim.sample_interval;
        }

        if (sender.failed()) throw StallError("connection failed: " + sender.error(), diagnostic(now));
        std::uint64_t marker = received.size() + static_cast<std::uint64_t>(sender.state()) * (1ull << 40) +
                               static_cast<std::uint64_t>(receiver.state()) * (1ull << 44);
        if (marker != progress_marker) {
          progress_marker = marker;
          last_progress = now;
        } else if (now - last_progress > lim.stall_timeout) {
          throw StallError("no progress for " + fmt_double(lim.stall_timeout) + " s", diagnostic(now));
        }

        if (!(sender.done() && receiver.done())) events.push(now + lim.tick_interval, EventKind::kClockTick);
        break;
      }
    }
    if (sender.done() && receiver.done()) break;
  }

  if (!receiver.completion_time()) throw StallError("event queue drained before completion", diagnostic(now));

  for (const auto& ev : events.pending()) {
    if (ev.kind == EventKind::kDeliverData) ++report.paths[ev.path].in_flight_at_end;
  }

  report.duration = *receiver.completion_time();
  report.goodput_mbps = static_cast<double>(stream.size()) * 8.0 / report.duration / 1e6;
  report.byte_identical = received.size() == stream.size() && std::equal(received.begin(), received.end(), stream.begin());

  const Receiver* r = receiver.receiver();
  for (std::size_t k = 0; k < n; ++k) {
    auto& pr = report.paths[k];
    if (r && k < r->path_stats().size()) {
      pr.innovative = r->path_stats()[k].innovative;
      pr.dependent = r->path_stats()[k].dependent;
      pr.stale = r->path_stats()[k].stale;
    }
    if (const auto* s = sender.sender()) pr.timeouts = s->path(k).timeouts;
    pr.mbps = static_cast<double>(pr.innovative * options.params.payload_size) * 8.0 / report.duration / 1e6;
  }

  if (options.record_series) {
    for (const auto& [key, bytes] : bins) {
      report.throughput.push_back(ThroughputSample{static_cast<double>(key.first) * lim.sample_interval, key.second,
                                                   bytes * 8.0 / lim.sample_interval / 1e6});
    }
  }
  return report;
}

}  // namespace ctcp::sim
