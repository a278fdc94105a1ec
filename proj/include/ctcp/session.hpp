#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctcp/params.hpp"
#include "ctcp/receiver.hpp"
#include "ctcp/sender.hpp"
#include "ctcp/trace.hpp"
#include "ctcp/wire.hpp"

// Connection endpoints that own a Sender or Receiver and speak the wire
// format. Transports (the simulator, UDP sockets) only move datagrams and
// supply the clock, so both drive the cores with the same call sequence.
namespace ctcp {

struct Outgoing {
  std::size_t path = 0;
  Bytes bytes;
  bool operator==(const Outgoing&) const = default;
};

struct SessionTiming {
  double syn_interval = 0.25;
  int max_syn_attempts = 20;
  double fin_interval = 0.25;
  int max_fin_attempts = 12;
  double linger = 1.0;  // receiver wait for the closing FINACK
};

/// One recorded transport-to-session call.
struct SessionInput {
  enum class Kind { kBegin, kDatagram, kTick, kPoll };
  Kind kind = Kind::kTick;
  double time = 0.0;
  std::size_t path = 0;
  Bytes bytes;
  bool operator==(const SessionInput&) const = default;
};

using InputRecorder = std::function<void(const SessionInput&)>;

enum class SessionState { kIdle, kHandshake, kEstablished, kClosing, kDone, kFailed };

class SenderSession {
 public:
  SenderSession(ProtocolParams params, SenderConfig config, std::size_t num_paths, Bytes stream,
                std::uint64_t seed, SessionTiming timing = {}, Tracer tracer = {});

  void begin(double now);
  void on_datagram(std::size_t path, std::span<const std::uint8_t> bytes, double now);
  void on_tick(double now);
  std::vector<Outgoing> poll(double now);

  SessionState state() const { return state_; }
  bool done() const { return state_ == SessionState::kDone; }
  bool failed() const { return state_ == SessionState::kFailed; }
  const std::string& error() const { return error_; }

  /// Null until the first SYNACK arrives.
  const Sender* sender() const { return sender_.get(); }
  const ProtocolParams& params() const { return params_; }
  bool path_established(std::size_t path) const { return established_.at(path); }
  std::uint64_t parse_errors() const { return parse_errors_; }

  void set_recorder(InputRecorder rec) { recorder_ = std::move(rec); }

 private:
  void queue_control(std::size_t path, wire::MsgType type);
  void record(SessionInput::Kind kind, double now, std::size_t path, std::span<const std::uint8_t> b);

  ProtocolParams params_;
  SenderConfig config_;
  std::size_t num_paths_;
  Bytes stream_;
  std::uint64_t seed_;
  SessionTiming timing_;
  Tracer tracer_;
  InputRecorder recorder_;

  std::unique_ptr<Sender> sender_;
  SessionState state_ = SessionState::kIdle;
  std::string error_;
  std::vector<bool> established_;
  std::vector<Outgoing> control_;
  double next_syn_ = 0.0;
  int syn_attempts_ = 0;
  double next_fin_ = 0.0;
  int fin_attempts_ = 0;
  std::uint64_t parse_errors_ = 0;
};

class ReceiverSession {
 public:
  /// `max_numblks` caps the sender's proposed window (0 accepts it as is).
  explicit ReceiverSession(std::size_t max_numblks = 0, SessionTiming timing = {}, Tracer tracer = {});

  void on_datagram(std::size_t path, std::span<const std::uint8_t> bytes, double now);
  void on_tick(double now);
  std::vector<Outgoing> poll(double now);

  SessionState state() const { return state_; }
  bool done() const { return state_ == SessionState::kDone; }
  /// All stream bytes decoded (FIN exchange may still be pending).
  bool complete() const { return receiver_ && receiver_->complete(); }
  /// Time at which the last stream byte was delivered.
  std::optional<double> completion_time() const { return completed_at_; }

  const Receiver* receiver() const { return receiver_.get(); }
  std::optional<ProtocolParams> params() const;
  std::uint64_t parse_errors() const { return parse_errors_; }

  /// Drains delivered application bytes.
  Bytes take_output();

  void set_recorder(InputRecorder rec) { recorder_ = std::move(rec); }

 private:
  void reply(std::size_t path, const wire::Message& msg);
  void record(SessionInput::Kind kind, double now, std::size_t path, std::span<const std::uint8_t> b);

  std::size_t max_numblks_;
  SessionTiming timing_;
  Tracer tracer_;
  InputRecorder recorder_;

  std::unique_ptr<Receiver> receiver_;
  ProtocolParams params_;
  SessionState state_ = SessionState::kIdle;
  std::vector<Outgoing> out_;
  Bytes output_;
  std::optional<double> completed_at_;
  double linger_until_ = 0.0;
  std::uint64_t parse_errors_ = 0;
};

/// Feeds recorded inputs to a session and returns everything it emitted.
template <class Session>
std::vector<Outgoing> replay(Session& session, std::span<const SessionInput> inputs) {
  std::vector<Outgoing> out;
  for (const auto& in : inputs) {
    switch (in.kind) {
      case SessionInput::Kind::kBegin:
        if constexpr (requires { session.begin(in.time); }) session.begin(in.time);
        break;
      case SessionInput::Kind::kDatagram:
        session.on_datagram(in.path, in.bytes, in.time);
        break;
      case SessionInput::Kind::kTick:
        session.on_tick(in.time);
        break;
      case SessionInput::Kind::kPoll: {
        auto batch = session.poll(in.time);
        out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
        break;
      }
    }
  }
  return out;
}

}  // namespace ctcp
