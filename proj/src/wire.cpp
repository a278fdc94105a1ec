#include "ctcp/wire.hpp"

#include <limits>

namespace ctcp::wire {

namespace {

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  bool ok() const { return ok_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  std::uint64_t uint(std::size_t width) {
    if (!ok_ || remaining() < width) {
      ok_ = false;
      return 0;
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  Bytes bytes(std::size_t n) {
    if (!ok_ || remaining() < n) {
      ok_ = false;
      return {};
    }
    Bytes b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
            in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

bool is_handshake(std::uint8_t t) {
  return t == static_cast<std::uint8_t>(MsgType::kSyn) ||
         t == static_cast<std::uint8_t>(MsgType::kSynAck) ||
         t == static_cast<std::uint8_t>(MsgType::kFin) ||
         t == static_cast<std::uint8_t>(MsgType::kFinAck);
}

Bytes serialize_data(const DataPacket& d) {
  if (d.blksize == 0) throw EncodeError("DATA: blksize must be >= 1");
  if (d.payload.empty()) throw EncodeError("DATA: empty payload");

  const bool systematic = std::holds_alternative<Systematic>(d.encoding);
  Writer w(wire_size(MsgType::kData, systematic ? CoeffFlag::kSystematic : CoeffFlag::kDense,
                     d.blksize, d.payload.size()));
  w.u8(static_cast<std::uint8_t>(MsgType::kData));
  w.u8(d.path_id);
  w.u32(d.seqno);
  w.u32(d.blockno);
  w.u16(d.blksize);
  if (systematic) {
    const auto& s = std::get<Systematic>(d.encoding);
    if (s.index >= d.blksize) throw EncodeError("DATA: systematic index >= blksize");
    w.u8(static_cast<std::uint8_t>(CoeffFlag::kSystematic));
    w.u16(s.index);
  } else {
    const auto& dense = std::get<Dense>(d.encoding);
    if (dense.coeffs.size() != d.blksize) throw EncodeError("DATA: coefficient vector length");
    w.u8(static_cast<std::uint8_t>(CoeffFlag::kDense));
    w.bytes(dense.coeffs);
  }
  w.bytes(d.payload);
  return w.take();
}

Bytes serialize_ack(const AckPacket& a) {
  Writer w(kAckSize);
  w.u8(static_cast<std::uint8_t>(MsgType::kAck));
  w.u8(a.path_id);
  w.u32(a.ack_seqno);
  w.u32(a.ack_currblk);
  w.u16(a.ack_currdof);
  return w.take();
}

Bytes serialize_handshake(const Handshake& h) {
  if (!is_handshake(static_cast<std::uint8_t>(h.type))) throw EncodeError("handshake: bad type");
  if (h.blksize == 0 || h.numblks == 0 || h.payload_size == 0) {
    throw EncodeError("handshake: blksize, numblks and payload_size must be >= 1");
  }
  Writer w(kHandshakeSize);
  w.u8(static_cast<std::uint8_t>(h.type));
  w.u8(h.path_id);
  w.u16(h.blksize);
  w.u16(h.numblks);
  w.u16(h.payload_size);
  w.u64(h.stream_length);
  return w.take();
}

}  // namespace

CodedPayload DataPacket::to_coded() const {
  CodedPayload out;
  if (const auto* s = std::get_if<Systematic>(&encoding)) {
    out.coeffs.assign(blksize, 0);
    if (s->index < blksize) out.coeffs[s->index] = 1;
  } else {
    out.coeffs = std::get<Dense>(encoding).coeffs;
  }
  out.data = payload;
  return out;
}

DataPacket DataPacket::from_coded(std::uint8_t path_id, std::uint32_t seqno, std::uint32_t blockno,
                                  CodedPayload coded) {
  if (coded.coeffs.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw EncodeError("DATA: blksize exceeds 16 bits");
  }
  DataPacket d;
  d.path_id = path_id;
  d.seqno = seqno;
  d.blockno = blockno;
  d.blksize = static_cast<std::uint16_t>(coded.coeffs.size());
  if (auto idx = coded.systematic_index()) {
    d.encoding = Systematic{static_cast<std::uint16_t>(*idx)};
  } else {
    d.encoding = Dense{std::move(coded.coeffs)};
  }
  d.payload = std::move(coded.data);
  return d;
}

std::size_t wire_size(MsgType type, CoeffFlag flag, std::size_t blksize, std::size_t payload_size) {
  switch (type) {
    case MsgType::kData:
      return kDataHeaderSize + 1 + (flag == CoeffFlag::kSystematic ? 2 : blksize) + payload_size;
    case MsgType::kAck:
      return kAckSize;
    default:
      return kHandshakeSize;
  }
}

Bytes serialize(const Message& msg) {
  return std::visit(
      [](const auto& m) -> Bytes {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DataPacket>) return serialize_data(m);
        else if constexpr (std::is_same_v<T, AckPacket>) return serialize_ack(m);
        else return serialize_handshake(m);
      },
      msg);
}

std::string_view to_string(ParseError e) {
  switch (e) {
    case ParseError::kNone: return "none";
    case ParseError::kTruncated: return "truncated";
    case ParseError::kUnknownType: return "unknown type";
    case ParseError::kBadIndex: return "systematic index out of range";
    case ParseError::kBadField: return "invalid field";
    case ParseError::kTrailingBytes: return "trailing bytes";
  }
  return "?";
}

ParseResult deserialize(std::span<const std::uint8_t> bytes) {
  auto fail = [](ParseError e) { return ParseResult{std::nullopt, e}; };
  if (bytes.empty()) return fail(ParseError::kTruncated);

  Reader r(bytes);
  const std::uint8_t type = r.u8();

  if (type == static_cast<std::uint8_t>(MsgType::kData)) {
    DataPacket d;
    d.path_id = r.u8();
    d.seqno = r.u32();
    d.blockno = r.u32();
    d.blksize = r.u16();
    const std::uint8_t flag = r.u8();
    if (!r.ok()) return fail(ParseError::kTruncated);
    if (d.blksize == 0) return fail(ParseError::kBadField);
    if (flag == static_cast<std::uint8_t>(CoeffFlag::kSystematic)) {
      Systematic s{r.u16()};
      if (!r.ok()) return fail(ParseError::kTruncated);
      if (s.index >= d.blksize) return fail(ParseError::kBadIndex);
      d.encoding = s;
    } else if (flag == static_cast<std::uint8_t>(CoeffFlag::kDense)) {
      Dense dense{r.bytes(d.blksize)};
      if (!r.ok()) return fail(ParseError::kTruncated);
      d.encoding = std::move(dense);
    } else {
      return fail(ParseError::kBadField);
    }
    if (r.remaining() == 0) return fail(ParseError::kTruncated);
    d.payload = r.bytes(r.remaining());
    return ParseResult{Message{std::move(d)}, ParseError::kNone};
  }

  if (type == static_cast<std::uint8_t>(MsgType::kAck)) {
    AckPacket a;
    a.path_id = r.u8();
    a.ack_seqno = r.u32();
    a.ack_currblk = r.u32();
    a.ack_currdof = r.u16();
    if (!r.ok()) return fail(ParseError::kTruncated);
    if (r.remaining() != 0) return fail(ParseError::kTrailingBytes);
    return ParseResult{Message{a}, ParseError::kNone};
  }

  if (is_handshake(type)) {
    Handshake h;
    h.type = static_cast<MsgType>(type);
    h.path_id = r.u8();
    h.blksize = r.u16();
    h.numblks = r.u16();
    h.payload_size = r.u16();
    h.stream_length = r.u64();
    if (!r.ok()) return fail(ParseError::kTruncated);
    if (r.remaining() != 0) return fail(ParseError::kTrailingBytes);
    if (h.blksize == 0 || h.numblks == 0 || h.payload_size == 0) return fail(ParseError::kBadField);
    return ParseResult{Message{h}, ParseError::kNone};
  }

  return fail(ParseError::kUnknownType);
}

}  // namespace ctcp::wire
