#include "ctcp/sender.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctcp {

namespace {

// ACKs for packets further than this below seqno_una are treated as stale.
constexpr SeqNo kLogReorderHorizon = 4096;

}  // namespace

double loss_ewma(double p, double weight, std::uint32_t losses) {
  // (1-w)^n via log1p/expm1 so the (1 - (1-w)^n) term keeps full relative
  // precision when w*n is small.
  const double l1 = std::log1p(-weight);
  const double keep = std::exp(static_cast<double>(losses + 1) * l1);
  const double gained = -std::expm1(static_cast<double>(losses) * l1);
  return p * keep + gained;
}

const SentRecord* PathState::lookup(SeqNo s) const {
  if (s < valid_from || s < log_base) return nullptr;
  const std::size_t off = s - log_base;
  if (off >= log.size()) return nullptr;
  return &log[off];
}

Sender::Sender(ProtocolParams params, SenderConfig config, std::size_t num_paths, std::uint64_t seed,
               Tracer tracer)
    : params_(params), config_(config), paths_(num_paths), rng_(seed), tracer_(std::move(tracer)) {
  if (params_.blksize == 0 || params_.numblks == 0 || params_.payload_size == 0) {
    throw std::invalid_argument("Sender: blksize, numblks and payload_size must be >= 1");
  }
  if (num_paths == 0 || num_paths > 256) throw std::invalid_argument("Sender: need 1..256 paths");
  for (auto& ps : paths_) {
    ps.p = config_.initial_p;
    ps.p_long = config_.initial_p;
    ps.p_stdlong = config_.initial_p_stdlong;
    ps.rtt = config_.initial_rtt;
    ps.rto = config_.gamma * config_.initial_rtt;
    ps.ss_threshold = config_.initial_ss_threshold;
    ps.tokens = config_.initial_tokens;
  }
}

void Sender::push_stream(std::span<const std::uint8_t> bytes) {
  if (closed_) throw std::logic_error("push_stream after close");
  stream_length_ += bytes.size();
  const std::size_t psz = params_.payload_size;
  std::size_t pos = 0;
  if (!tail_.empty()) {
    const std::size_t take = std::min(psz - tail_.size(), bytes.size());
    tail_.insert(tail_.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(take));
    pos = take;
    if (tail_.size() == psz) {
      pending_packets_.push_back(std::move(tail_));
      tail_.clear();
      ++packets_formed_;
    }
  }
  while (bytes.size() - pos >= psz) {
    pending_packets_.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + psz));
    pos += psz;
    ++packets_formed_;
  }
  tail_.insert(tail_.end(), bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  refill_window();
}

void Sender::close_stream() {
  if (closed_) return;
  closed_ = true;
  if (!tail_.empty()) {
    tail_.resize(params_.payload_size, 0);
    pending_packets_.push_back(std::move(tail_));
    tail_.clear();
    ++packets_formed_;
  }
  refill_window();
}

std::size_t Sender::block_count() const {
  const std::uint64_t packets = packets_formed_ + (tail_.empty() ? 0 : 1);
  return static_cast<std::size_t>((packets + params_.blksize - 1) / params_.blksize);
}

void Sender::refill_window() {
  while (window_.size() < params_.numblks && !pending_packets_.empty()) {
    if (pending_packets_.size() < params_.blksize && !closed_) break;
    ActiveBlock ab;
    ab.block.blkno = next_blkno_++;
    ab.block.capacity = params_.blksize;
    ab.block.payload_size = params_.payload_size;
    const std::size_t n = std::min(params_.blksize, pending_packets_.size());
    for (std::size_t i = 0; i < n; ++i) {
      ab.block.packets.push_back(std::move(pending_packets_.front()));
      pending_packets_.pop_front();
    }
    window_.push_back(std::move(ab));
  }
}

const Block* Sender::block(BlockNo blkno) const {
  if (blkno < currblk_ || blkno - currblk_ >= window_.size()) return nullptr;
  return &window_[blkno - currblk_].block;
}

void Sender::set_window_state(BlockNo currblk, std::size_t currdof) {
  while (currblk_ < currblk && !window_.empty()) {
    window_.pop_front();
    ++currblk_;
  }
  currblk_ = currblk;
  currdof_ = currdof;
  refill_window();
}

void Sender::start(double now) {
  for (auto& ps : paths_) ps.time_lastack = now;
}

bool Sender::finished() const {
  if (!closed_ || !pending_packets_.empty()) return false;
  return window_.empty() && currblk_ == next_blkno_;
}

void Sender::set_tokens(std::size_t path, double value, TokenReason why) {
  auto& ps = paths_[path];
  const double before = ps.tokens;
  ps.tokens = std::max(value, config_.token_floor);
  if (token_obs_) token_obs_(TokenChange{path, why, before, ps.tokens});
}

void Sender::prune_log(PathState& ps) {
  SeqNo floor = ps.seqno_una > kLogReorderHorizon ? ps.seqno_una - kLogReorderHorizon : 0;
  floor = std::max(floor, std::min(ps.valid_from, ps.seqno_una));
  while (ps.log_base < floor && !ps.log.empty()) {
    ps.log.pop_front();
    ++ps.log_base;
  }
}

void Sender::on_ack(const wire::AckPacket& ack, double now) {
  if (ack.path_id >= paths_.size()) return;
  const std::size_t i = ack.path_id;
  auto& ps = paths_[i];

  const SentRecord* rec = ps.lookup(ack.ack_seqno);
  if (rec == nullptr) {
    tracer_.emit(now, "snd", "stale_ack", {{"path", i}, {"seq", ack.ack_seqno}});
    return;
  }

  ps.time_lastack = now;
  const double sample = std::max(now - rec->time, 1e-9);
  ps.rtt = ps.rtt * (1.0 - config_.alpha_rtt) + sample * config_.alpha_rtt;

  if (ack.ack_currblk > currblk_) {
    const std::size_t advance = ack.ack_currblk - currblk_;
    for (std::size_t k = 0; k < advance && !window_.empty(); ++k) window_.pop_front();
    currdof_ = ack.ack_currdof;
    currblk_ = ack.ack_currblk;
    refill_window();
  }

  if (ack.ack_seqno >= ps.seqno_una) {
    const std::uint32_t losses = ack.ack_seqno - ps.seqno_una;
    ps.p = loss_ewma(ps.p, config_.mu, losses);
    ps.p_long = loss_ewma(ps.p_long, config_.nu, losses);
    ps.p_stdlong = ps.p_stdlong * (1.0 - config_.nu) + config_.nu * std::abs(ps.p - ps.p_long);
    ps.seqno_una = ack.ack_seqno + 1;
  }
  // ack_currdof describes ack_currblk; an older ACK says nothing about ours.
  if (ack.ack_currblk == currblk_) currdof_ = std::max<std::size_t>(ack.ack_currdof, currdof_);
  if (!window_.empty()) currdof_ = std::min(currdof_, window_.front().block.fill_count());

  ++ps.acks_processed;
  on_ack_cc(i, sample);
  prune_log(ps);

  tracer_.emit(now, "snd", "ack",
               {{"path", i},
                {"seq", ack.ack_seqno},
                {"currblk", currblk_},
                {"currdof", currdof_},
                {"rtt", ps.rtt},
                {"p", ps.p},
                {"p_long", ps.p_long},
                {"tokens", ps.tokens}});
}

void Sender::on_ack_cc(std::size_t i, double rtt_sample) {
  auto& ps = paths_[i];
  ps.rto = config_.gamma * ps.rtt;

  if (ps.mode == CcMode::kSlowStart) {
    set_tokens(i, ps.tokens + 1.0, TokenReason::kSlowStart);
    if (ps.tokens > ps.ss_threshold) ps.mode = CcMode::kCongestionAvoidance;
  } else {
    const double delta = 1.0 - ps.rtt / rtt_sample;
    if (delta > config_.beta_vegas) {
      set_tokens(i, ps.tokens - 1.0 / ps.tokens, TokenReason::kAvoidanceDown);
    } else if (delta < config_.alpha_vegas) {
      set_tokens(i, ps.tokens + 1.0 / ps.tokens, TokenReason::kAvoidanceUp);
    }
  }

  if (ps.p > ps.p_long + ps.p_stdlong) {
    set_tokens(i, ps.tokens - (ps.p - ps.p_long) / 2.0, TokenReason::kLossSpike);
  }
}

void Sender::on_tick(std::size_t i, double now) {
  auto& ps = paths_.at(i);
  // Nothing outstanding means no ACK is owed; an idle path does not time out.
  if (ps.outstanding() == 0) return;
  if (!(now > ps.time_lastack + ps.rto)) return;

  ps.rto *= 2.0;
  ps.ss_threshold = ps.tokens / 2.0;
  set_tokens(i, config_.initial_tokens, TokenReason::kTimeout);
  ps.seqno_una = ps.seqno_nxt;
  ps.valid_from = ps.seqno_nxt;
  ps.mode = CcMode::kSlowStart;
  ps.time_lastack = now;
  ++ps.timeouts;
  prune_log(ps);

  tracer_.emit(now, "snd", "timeout", {{"path", i}, {"rto", ps.rto}, {"ss_threshold", ps.ss_threshold}});
}

void Sender::count_onfly(const PathState& ps, double now, std::vector<double>& onfly) const {
  const double horizon = config_.inflight_horizon * ps.rtt;
  // Send times are nondecreasing in seqno, so scan newest first and stop at
  // the first packet past the horizon.
  for (SeqNo s = ps.seqno_nxt; s != ps.seqno_una;) {
    const SentRecord* rec = ps.lookup(--s);
    if (rec == nullptr || !(now < rec->time + horizon)) break;
    if (rec->blkno < currblk_) continue;
    const std::size_t off = rec->blkno - currblk_;
    if (off < onfly.size()) onfly[off] += 1.0;
  }
}

std::optional<BlockNo> Sender::schedule_single(std::size_t i, double now) const {
  const auto& ps = paths_.at(i);
  std::vector<double> onfly(window_.size(), 0.0);
  count_onfly(ps, now, onfly);

  for (std::size_t off = 0; off < window_.size(); ++off) {
    const double target = static_cast<double>(block_target(off));
    const double need = off == 0 ? target - static_cast<double>(currdof_) : target;
    if ((1.0 - ps.p) * onfly[off] < need) return currblk_ + static_cast<BlockNo>(off);
  }
  return std::nullopt;
}

std::optional<BlockNo> Sender::schedule_multi(std::size_t i, double now) const {
  const auto& me = paths_.at(i);
  // thru * RTT_i - sent, accumulated per path so path i's own term is exactly zero.
  double lead = 0.0;
  std::vector<double> cof(window_.size(), 0.0);
  std::vector<double> onfly(window_.size());
  for (std::size_t k = 0; k < paths_.size(); ++k) {
    const auto& ps = paths_[k];
    const double delivered = (1.0 - ps.p) * static_cast<double>(ps.outstanding());
    if (k != i) lead += delivered * (me.rtt / ps.rtt - 1.0);
    std::fill(onfly.begin(), onfly.end(), 0.0);
    count_onfly(ps, now, onfly);
    for (std::size_t off = 0; off < cof.size(); ++off) cof[off] += (1.0 - ps.p) * onfly[off];
  }

  for (std::size_t off = 0; off < window_.size(); ++off) {
    const double target = static_cast<double>(block_target(off));
    const BlockNo blkno = currblk_ + static_cast<BlockNo>(off);
    if (off == 0) {
      const double dof = static_cast<double>(currdof_);
      if (config_.currblk_guard == CurrblkGuard::kNeeded) {
        if (lead + cof[0] < target - dof) return blkno;
        continue;
      }
      if (lead + cof[0] < dof) return blkno;
    }
    if (cof[off] < target) return blkno;
  }
  return std::nullopt;
}

std::optional<BlockNo> Sender::schedule(std::size_t path, double now) const {
  return config_.scheduler == SchedulerKind::kMultiPath ? schedule_multi(path, now)
                                                         : schedule_single(path, now);
}

std::optional<wire::DataPacket> Sender::try_transmit(std::size_t i, double now) {
  auto& ps = paths_.at(i);
  if (ps.available() < 1.0) return std::nullopt;
  const auto blkno = schedule(i, now);
  if (!blkno) return std::nullopt;

  auto& ab = window_[*blkno - currblk_];
  CodedPayload coded = encode(ab.block, ab.next_index++, rng_);

  if (ps.outstanding() == 0) ps.time_lastack = now;
  const double before = ps.available();
  const SeqNo seq = ps.seqno_nxt++;
  if (ps.log.empty()) ps.log_base = seq;
  ps.log.push_back(SentRecord{*blkno, now});
  ++ps.packets_sent;
  if (token_obs_) token_obs_(TokenChange{i, TokenReason::kTransmit, before, ps.available()});

  tracer_.emit(now, "snd", "send",
               {{"path", i}, {"seq", seq}, {"blk", *blkno}, {"tokens", ps.tokens}, {"avail", ps.available()}});
  return wire::DataPacket::from_coded(static_cast<std::uint8_t>(i), seq, *blkno, std::move(coded));
}

}  // namespace ctcp
