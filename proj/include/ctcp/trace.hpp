#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctcp {

struct TraceField {
  template <class T>
  TraceField(std::string_view k, T v) : key(k), value(static_cast<double>(v)) {}
  std::string_view key;
  double value;
};

/// One line-delimited trace record: a time, the emitting side, an event
/// name and a flat list of numeric fields.
struct TraceRecord {
  double time = 0.0;
  std::string_view side;   // "snd" / "rcv"
  std::string_view event;
  std::vector<TraceField> fields;

  std::string to_json() const;
};

/// Receives trace records. A default-constructed Tracer discards everything.
class Tracer {
 public:
  using Sink = std::function<void(const TraceRecord&)>;

  Tracer() = default;
  explicit Tracer(Sink sink) : sink_(std::move(sink)) {}

  /// Writes one JSON object per line to `os`.
  static Tracer to_stream(std::ostream& os);

  bool enabled() const { return static_cast<bool>(sink_); }

  void emit(double time, std::string_view side, std::string_view event,
            std::initializer_list<TraceField> fields) const {
    if (!sink_) return;
    sink_(TraceRecord{time, side, event, {fields.begin(), fields.end()}});
  }

 private:
  Sink sink_;
};

}  // namespace ctcp
