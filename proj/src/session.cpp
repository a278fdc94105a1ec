#include "ctcp/session.hpp"

#include <algorithm>
#include <limits>

namespace ctcp {

namespace {

wire::Handshake make_handshake(wire::MsgType type, std::size_t path, const ProtocolParams& p,
                               std::uint64_t stream_length) {
  wire::Handshake h;
  h.type = type;
  h.path_id = static_cast<std::uint8_t>(path);
  h.blksize = static_cast<std::uint16_t>(p.blksize);
  h.numblks = static_cast<std::uint16_t>(p.numblks);
  h.payload_size = static_cast<std::uint16_t>(p.payload_size);
  h.stream_length = stream_length;
  return h;
}

void check_wire_limits(const ProtocolParams& p) {
  constexpr std::size_t kMax = std::numeric_limits<std::uint16_t>::max();
  if (p.blksize == 0 || p.numblks == 0 || p.payload_size == 0 || p.blksize > kMax ||
      p.numblks > kMax || p.payload_size > kMax) {
    throw std::invalid_argument("protocol parameters must be in [1, 65535]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SenderSession

SenderSession::SenderSession(ProtocolParams params, SenderConfig config, std::size_t num_paths, Bytes stream,
                             std::uint64_t seed, SessionTiming timing, Tracer tracer)
    : params_(params),
      config_(config),
      num_paths_(num_paths),
      stream_(std::move(stream)),
      seed_(seed),
      timing_(timing),
      tracer_(std::move(tracer)),
      established_(num_paths, false) {
  check_wire_limits(params_);
  if (num_paths == 0 || num_paths > 256) throw std::invalid_argument("SenderSession: need 1..256 paths");
}

void SenderSession::record(SessionInput::Kind kind, double now, std::size_t path,
                           std::span<const std::uint8_t> b) {
  if (recorder_) recorder_(SessionInput{kind, now, path, Bytes(b.begin(), b.end())});
}

void SenderSession::queue_control(std::size_t path, wire::MsgType type) {
  control_.push_back(Outgoing{path, wire::serialize(make_handshake(type, path, params_, stream_.size()))});
}

void SenderSession::begin(double now) {
  record(SessionInput::Kind::kBegin, now, 0, {});
  if (state_ != SessionState::kIdle) return;
  state_ = SessionState::kHandshake;
  for (std::size_t k = 0; k < num_paths_; ++k) queue_control(k, wire::MsgType::kSyn);
  syn_attempts_ = 1;
  next_syn_ = now + timing_.syn_interval;
  tracer_.emit(now, "snd", "syn", {{"paths", num_paths_}});
}

void SenderSession::on_datagram(std::size_t path, std::span<const std::uint8_t> bytes, double now) {
  record(SessionInput::Kind::kDatagram, now, path, bytes);
  auto parsed = wire::deserialize(bytes);
  if (!parsed) {
    ++parse_errors_;
    return;
  }

  if (const auto* ack = std::get_if<wire::AckPacket>(&*parsed.message)) {
    if (!sender_ || state_ == SessionState::kDone || state_ == SessionState::kFailed) return;
    sender_->on_ack(*ack, now);
    if (state_ == SessionState::kEstablished && sender_->finished()) {
      state_ = SessionState::kClosing;
      queue_control(0, wire::MsgType::kFin);
      fin_attempts_ = 1;
      next_fin_ = now + timing_.fin_interval;
    }
    return;
  }

  const auto* hs = std::get_if<wire::Handshake>(&*parsed.message);
  if (hs == nullptr) return;  // data packets are not for us

  if (hs->type == wire::MsgType::kSynAck) {
    if (state_ == SessionState::kFailed || state_ == SessionState::kDone) return;
    if (!sender_) {
      if (hs->blksize != params_.blksize || hs->payload_size != params_.payload_size ||
          hs->numblks > params_.numblks || hs->stream_length != stream_.size()) {
        state_ = SessionState::kFailed;
        error_ = "handshake: receiver answered with incompatible parameters";
        return;
      }
      params_.numblks = hs->numblks;
      sender_ = std::make_unique<Sender>(params_, config_, num_paths_, seed_, tracer_);
      sender_->push_stream(stream_);
      sender_->close_stream();
      state_ = SessionState::kEstablished;
    }
    if (path < num_paths_ && !established_[path]) {
      established_[path] = true;
      sender_->mutable_path(path).time_lastack = now;
      tracer_.emit(now, "snd", "established", {{"path", path}});
    }
    if (state_ == SessionState::kEstablished && sender_->finished()) {
      state_ = SessionState::kClosing;
      queue_control(0, wire::MsgType::kFin);
      fin_attempts_ = 1;
      next_fin_ = now + timing_.fin_interval;
    }
    return;
  }

  if (hs->type == wire::MsgType::kFinAck && state_ == SessionState::kClosing) {
    queue_control(path, wire::MsgType::kFinAck);
    state_ = SessionState::kDone;
    tracer_.emit(now, "snd", "closed", {});
  }
}

void SenderSession::on_tick(double now) {
  record(SessionInput::Kind::kTick, now, 0, {});
  const bool waiting_paths = std::find(established_.begin(), established_.end(), false) != established_.end();
  if ((state_ == SessionState::kHandshake || (state_ == SessionState::kEstablished && waiting_paths)) &&
      now >= next_syn_) {
    if (syn_attempts_ >= timing_.max_syn_attempts) {
      if (state_ == SessionState::kHandshake) {
        state_ = SessionState::kFailed;
        error_ = "handshake timed out";
        return;
      }
    } else {
      for (std::size_t k = 0; k < num_paths_; ++k) {
        if (!established_[k]) queue_control(k, wire::MsgType::kSyn);
      }
      ++syn_attempts_;
      next_syn_ = now + timing_.syn_interval;
    }
  }

  if (sender_ && (state_ == SessionState::kEstablished || state_ == SessionState::kClosing)) {
    for (std::size_t k = 0; k < num_paths_; ++k) {
      if (established_[k]) sender_->on_tick(k, now);
    }
  }

  if (state_ == SessionState::kClosing && now >= next_fin_) {
    if (fin_attempts_ >= timing_.max_fin_attempts) {
      // Every block was acknowledged as decoded; only the close went unanswered.
      state_ = SessionState::kDone;
      return;
    }
    queue_control(0, wire::MsgType::kFin);
    ++fin_attempts_;
    next_fin_ = now + timing_.fin_interval;
  }
}

std::vector<Outgoing> SenderSession::poll(double now) {
  record(SessionInput::Kind::kPoll, now, 0, {});
  std::vector<Outgoing> out;
  out.swap(control_);
  if (state_ != SessionState::kEstablished || !sender_) return out;

  // One packet per path per round keeps paths interleaved.
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (std::size_t k = 0; k < num_paths_; ++k) {
      if (!established_[k]) continue;
      if (auto pkt = sender_->try_transmit(k, now)) {
        out.push_back(Outgoing{k, wire::serialize(*pkt)});
        progressed = true;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ReceiverSession

ReceiverSession::ReceiverSession(std::size_t max_numblks, SessionTiming timing, Tracer tracer)
    : max_numblks_(max_numblks), timing_(timing), tracer_(std::move(tracer)) {}

void ReceiverSession::record(SessionInput::Kind kind, double now, std::size_t path,
                             std::span<const std::uint8_t> b) {
  if (recorder_) recorder_(SessionInput{kind, now, path, Bytes(b.begin(), b.end())});
}

std::optional<ProtocolParams> ReceiverSession::params() const {
  if (!receiver_) return std::nullopt;
  return params_;
}

void ReceiverSession::reply(std::size_t path, const wire::Message& msg) {
  out_.push_back(Outgoing{path, wire::serialize(msg)});
}

void ReceiverSession::on_datagram(std::size_t path, std::span<const std::uint8_t> bytes, double now) {
  record(SessionInput::Kind::kDatagram, now, path, bytes);
  auto parsed = wire::deserialize(bytes);
  if (!parsed) {
    ++parse_errors_;
    return;
  }

  if (const auto* data = std::get_if<wire::DataPacket>(&*parsed.message)) {
    if (!receiver_) return;
    reply(path, receiver_->on_data(*data, now));
    Bytes fresh = receiver_->read_delivered();
    output_.insert(output_.end(), fresh.begin(), fresh.end());
    if (receiver_->complete() && !completed_at_) completed_at_ = now;
    return;
  }

  const auto* hs = std::get_if<wire::Handshake>(&*parsed.message);
  if (hs == nullptr) return;

  switch (hs->type) {
    case wire::MsgType::kSyn: {
      if (!receiver_) {
        params_.blksize = hs->blksize;
        params_.payload_size = hs->payload_size;
        params_.numblks = max_numblks_ == 0 ? hs->numblks : std::min<std::size_t>(hs->numblks, max_numblks_);
        receiver_ = std::make_unique<Receiver>(params_, hs->stream_length, tracer_);
        state_ = SessionState::kEstablished;
        if (receiver_->complete()) completed_at_ = now;
      }
      reply(path, make_handshake(wire::MsgType::kSynAck, path, params_, receiver_->stream_length()));
      break;
    }
    case wire::MsgType::kFin:
      if (!receiver_) break;
      reply(path, make_handshake(wire::MsgType::kFinAck, path, params_, receiver_->stream_length()));
      if (state_ == SessionState::kEstablished) {
        state_ = SessionState::kClosing;
        linger_until_ = now + timing_.linger;
      }
      break;
    case wire::MsgType::kFinAck:
      if (state_ == SessionState::kClosing) state_ = SessionState::kDone;
      break;
    default:
      break;
  }
}

void ReceiverSession::on_tick(double now) {
  record(SessionInput::Kind::kTick, now, 0, {});
  if (state_ == SessionState::kClosing && now >= linger_until_) state_ = SessionState::kDone;
}

std::vector<Outgoing> ReceiverSession::poll(double now) {
  record(SessionInput::Kind::kPoll, now, 0, {});
  std::vector<Outgoing> out;
  out.swap(out_);
  return out;
}

Bytes ReceiverSession::take_output() {
  Bytes out;
  out.swap(output_);
  return out;
}

}  // namespace ctcp
