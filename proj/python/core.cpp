#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "ctcp/codec.hpp"
#include "ctcp/experiment.hpp"
#include "ctcp/gf256.hpp"
#include "ctcp/netsim.hpp"
#include "ctcp/scenario.hpp"
#include "ctcp/sender.hpp"
#include "ctcp/udp.hpp"
#include "ctcp/wire.hpp"

namespace py = pybind11;
using namespace ctcp;

namespace {

Bytes to_bytes(const py::bytes& b) {
  const std::string_view v = b;
  return Bytes(v.begin(), v.end());
}

py::bytes from_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

const char* type_name(wire::MsgType t) {
  switch (t) {
    case wire::MsgType::kData: return "data";
    case wire::MsgType::kAck: return "ack";
    case wire::MsgType::kSyn: return "syn";
    case wire::MsgType::kSynAck: return "synack";
    case wire::MsgType::kFin: return "fin";
    case wire::MsgType::kFinAck: return "finack";
  }
  return "?";
}

wire::MsgType type_from(const std::string& s) {
  for (auto t : {wire::MsgType::kData, wire::MsgType::kAck, wire::MsgType::kSyn, wire::MsgType::kSynAck,
                 wire::MsgType::kFin, wire::MsgType::kFinAck}) {
    if (s == type_name(t)) return t;
  }
  throw py::value_error("unknown message type '" + s + "'");
}

template <class T>
T get(const py::dict& d, const char* key) {
  if (!d.contains(key)) throw py::key_error(key);
  return d[key].cast<T>();
}

py::dict message_to_dict(const wire::Message& m) {
  py::dict d;
  if (const auto* p = std::get_if<wire::DataPacket>(&m)) {
    d["type"] = "data";
    d["path_id"] = p->path_id;
    d["seqno"] = p->seqno;
    d["blockno"] = p->blockno;
    d["blksize"] = p->blksize;
    if (const auto* s = std::get_if<wire::Systematic>(&p->encoding)) {
      d["index"] = s->index;
    } else {
      d["coeffs"] = from_bytes(std::get<wire::Dense>(p->encoding).coeffs);
    }
    d["payload"] = from_bytes(p->payload);
  } else if (const auto* a = std::get_if<wire::AckPacket>(&m)) {
    d["type"] = "ack";
    d["path_id"] = a->path_id;
    d["ack_seqno"] = a->ack_seqno;
    d["ack_currblk"] = a->ack_currblk;
    d["ack_currdof"] = a->ack_currdof;
  } else {
    const auto& h = std::get<wire::Handshake>(m);
    d["type"] = type_name(h.type);
    d["path_id"] = h.path_id;
    d["blksize"] = h.blksize;
    d["numblks"] = h.numblks;
    d["payload_size"] = h.payload_size;
    d["stream_length"] = h.stream_length;
  }
  return d;
}

wire::Message message_from_dict(const py::dict& d) {
  const auto type = type_from(get<std::string>(d, "type"));
  if (type == wire::MsgType::kData) {
    wire::DataPacket p;
    p.path_id = get<std::uint8_t>(d, "path_id");
    p.seqno = get<std::uint32_t>(d, "seqno");
    p.blockno = get<std::uint32_t>(d, "blockno");
    p.blksize = get<std::uint16_t>(d, "blksize");
    if (d.contains("index")) {
      p.encoding = wire::Systematic{get<std::uint16_t>(d, "index")};
    } else {
      p.encoding = wire::Dense{to_bytes(get<py::bytes>(d, "coeffs"))};
    }
    p.payload = to_bytes(get<py::bytes>(d, "payload"));
    return p;
  }
  if (type == wire::MsgType::kAck) {
    return wire::AckPacket{get<std::uint8_t>(d, "path_id"), get<std::uint32_t>(d, "ack_seqno"),
                           get<std::uint32_t>(d, "ack_currblk"), get<std::uint16_t>(d, "ack_currdof")};
  }
  return wire::Handshake{type,
                         get<std::uint8_t>(d, "path_id"),
                         get<std::uint16_t>(d, "blksize"),
                         get<std::uint16_t>(d, "numblks"),
                         get<std::uint16_t>(d, "payload_size"),
                         get<std::uint64_t>(d, "stream_length")};
}

sim::PathConfig path_from_dict(const py::dict& d) {
  sim::PathConfig p;
  if (d.contains("delay")) p.one_way_delay = d["delay"].cast<double>();
  if (d.contains("bandwidth")) p.bandwidth = d["bandwidth"].cast<double>();
  if (d.contains("loss")) p.loss_rate = d["loss"].cast<double>();
  if (d.contains("queue")) p.queue_capacity = d["queue"].cast<std::size_t>();
  if (d.contains("seed")) p.seed = d["seed"].cast<std::uint64_t>();
  if (d.contains("jitter")) p.jitter = d["jitter"].cast<double>();
  if (d.contains("ack_loss")) p.ack_loss_rate = d["ack_loss"].cast<double>();
  return p;
}

SchedulerKind scheduler_from(const std::string& s) {
  if (s == "single") return SchedulerKind::kSinglePath;
  if (s == "multi") return SchedulerKind::kMultiPath;
  throw py::value_error("scheduler must be 'single' or 'multi'");
}

py::dict stats_to_dict(const udp::TransferStats& s) {
  py::dict d;
  d["duration"] = s.duration;
  d["goodput_mbps"] = s.goodput_mbps;
  d["bytes"] = s.bytes;
  d["datagrams_sent"] = s.datagrams_sent;
  d["datagrams_received"] = s.datagrams_received;
  d["data_packets"] = s.data_packets;
  d["parse_errors"] = s.parse_errors;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coded TCP: GF(2^8) block codec, wire format, simulator and UDP transport";

  py::register_exception<wire::EncodeError>(m, "EncodeError", PyExc_ValueError);
  py::register_exception<NotDecodable>(m, "NotDecodable", PyExc_ValueError);
  py::register_exception<sim::StallError>(m, "StallError", PyExc_RuntimeError);
  py::register_exception<sim::ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<udp::UdpError>(m, "UdpError", PyExc_OSError);

  m.def("gf_mul", &gf::mul, py::arg("a"), py::arg("b"));
  m.def("gf_inv", &gf::inv, py::arg("a"));
  m.def("loss_ewma", &loss_ewma, py::arg("p"), py::arg("weight"), py::arg("losses"),
        "Loss estimate after one acknowledged packet preceded by `losses` lost ones.");

  m.def(
      "encode",
      [](const std::vector<py::bytes>& packets, std::size_t blksize, std::size_t index, std::uint64_t seed) {
        if (packets.empty()) throw py::value_error("encode: empty block");
        Block b;
        b.capacity = blksize;
        for (const auto& p : packets) b.packets.push_back(to_bytes(p));
        b.payload_size = b.packets.front().size();
        for (const auto& p : b.packets) {
          if (p.size() != b.payload_size) throw py::value_error("encode: packets differ in length");
        }
        if (b.packets.size() > blksize) throw py::value_error("encode: more packets than blksize");
        SeededRng rng(seed);
        const CodedPayload c = encode(b, index, rng);
        return py::make_tuple(from_bytes(c.coeffs), from_bytes(c.data));
      },
      py::arg("packets"), py::arg("blksize"), py::arg("index"), py::arg("seed") = 1,
      "Returns (coeffs, data) for encode index `index` of the block.");

  py::class_<BlockDecoder>(m, "BlockDecoder")
      .def(py::init([](std::size_t blksize, std::size_t payload_size, std::optional<std::size_t> target) {
             if (blksize == 0 || payload_size == 0) throw py::value_error("blksize and payload_size must be >= 1");
             return BlockDecoder(0, blksize, payload_size, target.value_or(blksize));
           }),
           py::arg("blksize"), py::arg("payload_size"), py::arg("target") = py::none())
      .def(
          "insert",
          [](BlockDecoder& d, const py::bytes& coeffs, const py::bytes& data) {
            const Bytes c = to_bytes(coeffs), p = to_bytes(data);
            if (c.size() != d.blksize()) throw py::value_error("coeffs must be blksize bytes");
            return d.insert(c, p);
          },
          py::arg("coeffs"), py::arg("data"))
      .def_property_readonly("rank", &BlockDecoder::rank)
      .def_property_readonly("complete", &BlockDecoder::complete)
      .def("decode", [](BlockDecoder& d) {
        std::vector<py::bytes> out;
        for (const auto& p : d.decode()) out.push_back(from_bytes(p));
        return out;
      });

  m.def(
      "serialize", [](const py::dict& msg) { return from_bytes(wire::serialize(message_from_dict(msg))); },
      py::arg("message"));
  m.def(
      "deserialize",
      [](const py::bytes& data) {
        const Bytes b = to_bytes(data);
        const auto r = wire::deserialize(b);
        if (!r) throw py::value_error("cannot parse datagram: " + std::string(wire::to_string(r.error)));
        return message_to_dict(*r.message);
      },
      py::arg("data"));

  m.def(
      "simulate",
      [](const std::vector<py::dict>& paths, const py::bytes& stream, std::size_t blksize, std::size_t numblks,
         std::size_t payload_size, const std::string& scheduler, double ss_threshold, std::uint64_t seed) {
        std::vector<sim::PathConfig> cfg;
        for (const auto& p : paths) cfg.push_back(path_from_dict(p));
        sim::TransferOptions opt;
        opt.params = ProtocolParams{blksize, numblks, payload_size};
        opt.sender.scheduler = scheduler_from(scheduler);
        opt.sender.initial_ss_threshold = ss_threshold;
        opt.coding_seed = seed;
        const Bytes data = to_bytes(stream);
        sim::TransferReport r;
        {
          py::gil_scoped_release release;
          r = sim::run_transfer(cfg, data, opt);
        }
        return py::make_tuple(r.to_record(), r.throughput_csv());
      },
      py::arg("paths"), py::arg("stream"), py::arg("blksize") = 32, py::arg("numblks") = 8,
      py::arg("payload_size") = 1024, py::arg("scheduler") = "single", py::arg("ss_threshold") = 64.0,
      py::arg("seed") = 1, "Runs one simulated transfer; returns (report_json, throughput_csv).");

  m.def(
      "run_scenario",
      [](const std::string& path, std::optional<int> repetitions, std::optional<std::uint64_t> seed, unsigned jobs,
         std::optional<std::string> out_dir) {
        const auto sc = sim::load_scenario(path);
        sim::ExperimentOptions opt;
        opt.repetitions = repetitions;
        opt.base_seed = seed;
        opt.jobs = jobs;
        py::gil_scoped_release release;
        const auto res = sim::run_experiment(sc, opt);
        if (out_dir) sim::write_experiment(res, *out_dir);
        return res.summary_csv();
      },
      py::arg("path"), py::arg("repetitions") = py::none(), py::arg("seed") = py::none(), py::arg("jobs") = 1,
      py::arg("out_dir") = py::none(), "Runs a scenario sweep; returns the summary CSV.");

  m.def("make_stream", [](std::uint64_t size, std::uint64_t seed) { return from_bytes(sim::make_stream(size, seed)); },
        py::arg("size"), py::arg("seed"));

  m.def(
      "bind_socket",
      [](const std::string& local) {
        const auto [fd, port] = udp::bind_socket(udp::Endpoint::parse(local));
        return py::make_tuple(fd, port);
      },
      py::arg("local"), "Binds a UDP socket; returns (fd, port). Pass the fd to receive_on.");

  m.def(
      "send",
      [](const std::vector<std::string>& paths, const py::bytes& data, std::size_t blksize, std::size_t numblks,
         std::size_t payload_size, const std::string& scheduler, double timeout) {
        std::vector<udp::PathSpec> specs;
        for (const auto& p : paths) specs.push_back(udp::PathSpec::parse(p));
        udp::SendOptions opt;
        opt.params = ProtocolParams{blksize, numblks, payload_size};
        opt.sender.scheduler = scheduler_from(scheduler);
        opt.max_duration = timeout;
        const Bytes stream = to_bytes(data);
        udp::TransferStats s;
        {
          py::gil_scoped_release release;
          s = udp::send_stream(specs, stream, opt);
        }
        return stats_to_dict(s);
      },
      py::arg("paths"), py::arg("data"), py::arg("blksize") = 32, py::arg("numblks") = 8,
      py::arg("payload_size") = 1024, py::arg("scheduler") = "multi", py::arg("timeout") = 3600.0);

  m.def(
      "receive_on",
      [](const std::vector<int>& fds, double accept_timeout, double idle_timeout) {
        udp::ReceiveOptions opt;
        opt.accept_timeout = accept_timeout;
        opt.idle_timeout = idle_timeout;
        Bytes out;
        udp::TransferStats s;
        {
          py::gil_scoped_release release;
          s = udp::receive_on(fds, out, opt);
        }
        return py::make_tuple(from_bytes(out), stats_to_dict(s));
      },
      py::arg("fds"), py::arg("accept_timeout") = 0.0, py::arg("idle_timeout") = 30.0,
      "Accepts one connection on already-bound sockets; returns (data, stats).");
}
