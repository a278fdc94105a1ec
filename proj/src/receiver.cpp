#include "ctcp/receiver.hpp"

#include <algorithm>
#include <stdexcept>

namespace ctcp {

Receiver::Receiver(ProtocolParams params, std::uint64_t stream_length, Tracer tracer)
    : params_(params), stream_length_(stream_length), tracer_(std::move(tracer)) {
  if (params_.blksize == 0 || params_.numblks == 0 || params_.payload_size == 0) {
    throw std::invalid_argument("Receiver: blksize, numblks and payload_size must be >= 1");
  }
  total_packets_ = (stream_length_ + params_.payload_size - 1) / params_.payload_size;
  total_blocks_ = static_cast<std::uint32_t>((total_packets_ + params_.blksize - 1) / params_.blksize);
}

std::size_t Receiver::block_target(std::uint32_t blkno) const {
  const std::uint64_t first = static_cast<std::uint64_t>(blkno) * params_.blksize;
  return static_cast<std::size_t>(std::min<std::uint64_t>(params_.blksize, total_packets_ - first));
}

ReceiverPathStats& Receiver::stats(std::uint8_t path) {
  if (path >= stats_.size()) stats_.resize(path + 1u);
  return stats_[path];
}

const BlockDecoder* Receiver::decoder(std::uint32_t blkno) const {
  auto it = decoders_.find(blkno);
  return it == decoders_.end() ? nullptr : &it->second;
}

wire::AckPacket Receiver::on_data(const wire::DataPacket& pkt, double now) {
  auto& st = stats(pkt.path_id);
  ++st.received;

  const auto make_ack = [&] {
    return wire::AckPacket{pkt.path_id, pkt.seqno, ack_currblk_, ack_currdof_};
  };

  if (pkt.blockno < ack_currblk_) {
    ++st.stale;
    tracer_.emit(now, "rcv", "stale", {{"path", pkt.path_id}, {"seq", pkt.seqno}, {"blk", pkt.blockno}});
    return make_ack();
  }
  const bool in_window = pkt.blockno < total_blocks_ &&
                         pkt.blockno - ack_currblk_ < params_.numblks;
  const bool well_formed = pkt.blksize == params_.blksize && pkt.payload.size() == params_.payload_size;
  if (!in_window || !well_formed) {
    ++st.dropped;
    tracer_.emit(now, "rcv", "drop", {{"path", pkt.path_id}, {"seq", pkt.seqno}, {"blk", pkt.blockno}});
    return make_ack();
  }

  const std::size_t target = block_target(pkt.blockno);
  CodedPayload coded = pkt.to_coded();
  const bool beyond_fill =
      std::any_of(coded.coeffs.begin() + static_cast<std::ptrdiff_t>(target), coded.coeffs.end(),
                  [](std::uint8_t c) { return c != 0; });
  if (beyond_fill) {
    ++st.dropped;
    return make_ack();
  }

  auto it = decoders_.find(pkt.blockno);
  if (it == decoders_.end()) {
    it = decoders_
             .emplace(std::piecewise_construct, std::forward_as_tuple(pkt.blockno),
                      std::forward_as_tuple(pkt.blockno, params_.blksize, params_.payload_size, target))
             .first;
  }

  const bool innovative = !it->second.complete() && it->second.insert(coded);
  if (!innovative) {
    ++st.dependent;
    tracer_.emit(now, "rcv", "dependent", {{"path", pkt.path_id}, {"seq", pkt.seqno}, {"blk", pkt.blockno}});
    return make_ack();
  }

  ++st.innovative;
  if (pkt.blockno == ack_currblk_) {
    ack_currdof_ = static_cast<std::uint16_t>(it->second.rank());
    advance(now);
  }
  tracer_.emit(now, "rcv", "data",
               {{"path", pkt.path_id}, {"seq", pkt.seqno}, {"blk", pkt.blockno},
                {"currblk", ack_currblk_}, {"currdof", ack_currdof_}});
  return make_ack();
}

void Receiver::advance(double now) {
  while (ack_currblk_ < total_blocks_) {
    auto it = decoders_.find(ack_currblk_);
    if (it == decoders_.end() || !it->second.complete()) break;

    const std::vector<Bytes> packets = it->second.decode();
    for (const auto& pk : packets) {
      const std::uint64_t room = stream_length_ - delivered_;
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(room, pk.size()));
      out_.insert(out_.end(), pk.begin(), pk.begin() + static_cast<std::ptrdiff_t>(n));
      delivered_ += n;
    }
    decoders_.erase(it);
    tracer_.emit(now, "rcv", "decoded", {{"blk", ack_currblk_}, {"delivered", delivered_}});
    ++ack_currblk_;

    auto next = decoders_.find(ack_currblk_);
    ack_currdof_ = next == decoders_.end() ? 0 : static_cast<std::uint16_t>(next->second.rank());
  }
}

Bytes Receiver::read_delivered() {
  Bytes out;
  out.swap(out_);
  return out;
}

}  // namespace ctcp
