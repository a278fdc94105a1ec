#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>

#include "ctcp/codec.hpp"

// Wire format for CTCP datagrams. Offsets are listed in docs/wire.md. All
// multi-byte integers are big-endian.
namespace ctcp::wire {

enum class MsgType : std::uint8_t {
  kData = 0x01,
  kAck = 0x02,
  kSyn = 0x03,
  kSynAck = 0x04,
  kFin = 0x05,
  kFinAck = 0x06,
};

enum class CoeffFlag : std::uint8_t { kSystematic = 0x00, kDense = 0x01 };

struct Systematic {
  std::uint16_t index = 0;
  bool operator==(const Systematic&) const = default;
};

struct Dense {
  Bytes coeffs;  // exactly blksize bytes
  bool operator==(const Dense&) const = default;
};

using CoeffEncoding = std::variant<Systematic, Dense>;

struct DataPacket {
  std::uint8_t path_id = 0;
  std::uint32_t seqno = 0;
  std::uint32_t blockno = 0;
  std::uint16_t blksize = 0;
  CoeffEncoding encoding;
  Bytes payload;

  /// Expands the coefficient encoding into a full blksize vector.
  CodedPayload to_coded() const;
  static DataPacket from_coded(std::uint8_t path_id, std::uint32_t seqno, std::uint32_t blockno,
                               CodedPayload coded);

  bool operator==(const DataPacket&) const = default;
};

struct AckPacket {
  std::uint8_t path_id = 0;
  std::uint32_t ack_seqno = 0;
  std::uint32_t ack_currblk = 0;
  std::uint16_t ack_currdof = 0;
  bool operator==(const AckPacket&) const = default;
};

/// SYN, SYNACK, FIN and FINACK share one layout.
struct Handshake {
  MsgType type = MsgType::kSyn;
  std::uint8_t path_id = 0;
  std::uint16_t blksize = 1;
  std::uint16_t numblks = 1;
  std::uint16_t payload_size = 1;
  std::uint64_t stream_length = 0;
  bool operator==(const Handshake&) const = default;
};

using Message = std::variant<DataPacket, AckPacket, Handshake>;

inline constexpr std::size_t kDataHeaderSize = 12;  // type, path, seqno, blockno, blksize
inline constexpr std::size_t kAckSize = 12;
inline constexpr std::size_t kHandshakeSize = 16;

/// Size of a serialized message; a pure function of its shape.
std::size_t wire_size(MsgType type, CoeffFlag flag, std::size_t blksize, std::size_t payload_size);

class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Bytes serialize(const Message& msg);

enum class ParseError {
  kNone,
  kTruncated,
  kUnknownType,
  kBadIndex,     // SYSTEMATIC index >= blksize
  kBadField,     // zero blksize, empty payload, unknown coefficient flag, ...
  kTrailingBytes,
};

std::string_view to_string(ParseError e);

struct ParseResult {
  std::optional<Message> message;
  ParseError error = ParseError::kNone;

  explicit operator bool() const { return message.has_value(); }
};

/// Never throws on malformed input; every failure is a ParseError.
ParseResult deserialize(std::span<const std::uint8_t> bytes);

}  // namespace ctcp::wire
