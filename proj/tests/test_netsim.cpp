#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ctcp/experiment.hpp"
#include "ctcp/netsim.hpp"

using namespace ctcp;
using namespace ctcp::sim;

namespace {

constexpr std::uint64_t kPaperFileSize = 11492499;

struct Traced {
  TransferReport report;
  std::string trace;
};

Traced run_traced(const std::vector<PathConfig>& paths, const Bytes& stream, const TransferOptions& opt) {
  std::ostringstream os;
  Traced t;
  t.report = run_transfer(paths, stream, opt, Tracer::to_stream(os));
  t.trace = os.str();
  return t;
}

}  // namespace

TEST_CASE("netsim: loss draws") {
  PathConfig p;
  SeededRng rng(1);
  p.loss_rate = 0.0;
  for (int i = 0; i < 10000; ++i) REQUIRE_FALSE(loss_draw(p, rng));
  p.loss_rate = 1.0;
  for (int i = 0; i < 10000; ++i) REQUIRE(loss_draw(p, rng));
  p.loss_rate = 0.04;
  int drops = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) drops += loss_draw(p, rng);
  CHECK(std::abs(static_cast<double>(drops) / n - 0.04) <= 0.002);
}

TEST_CASE("netsim: path validation") {
  PathConfig p;
  CHECK_NOTHROW(p.validate());
  p.bandwidth = 0;
  CHECK_THROWS(p.validate());
  p = {};
  p.one_way_delay = -1;
  CHECK_THROWS(p.validate());
  p = {};
  p.queue_capacity = 0;
  CHECK_THROWS(p.validate());
  p = {};
  p.loss_rate = 1.5;
  CHECK_THROWS(p.validate());
  CHECK_THROWS_AS(run_transfer({}, Bytes{1}, {}), std::invalid_argument);
  CHECK_THROWS_AS(run_transfer({PathConfig{}}, Bytes{}, {}), std::invalid_argument);
}

TEST_CASE("netsim: a path that drops everything stalls") {
  PathConfig p;
  p.loss_rate = 1.0;
  TransferOptions opt;
  opt.limits.stall_timeout = 2.0;
  try {
    run_transfer({p}, make_stream(100000, 1), opt);
    FAIL("expected a stall");
  } catch (const StallError& e) {
    CHECK_FALSE(e.diagnostic().empty());
  }
}

TEST_CASE("netsim: identical seeds give identical reports and traces") {
  std::vector<PathConfig> paths(2);
  paths[0].loss_rate = 0.03;
  paths[0].bandwidth = 6e6;
  paths[0].jitter = 0.002;
  paths[1].loss_rate = 0.05;
  paths[1].bandwidth = 4e6;
  paths[1].one_way_delay = 0.03;
  paths[1].seed = 77;
  paths[1].ack_loss_rate = 0.01;
  TransferOptions opt;
  opt.sender.scheduler = SchedulerKind::kMultiPath;
  opt.coding_seed = 3;
  const Bytes stream = make_stream(2000000, 11);
  const Traced a = run_traced(paths, stream, opt);
  const Traced b = run_traced(paths, stream, opt);
  CHECK(a.report.byte_identical);
  CHECK(a.report.to_record() == b.report.to_record());
  CHECK(a.report.throughput_csv() == b.report.throughput_csv());
  CHECK(a.trace == b.trace);
  CHECK(a.trace.size() > 1000);

  paths[0].seed = 2;
  const Traced c = run_traced(paths, stream, opt);
  CHECK(c.report.byte_identical);
  CHECK(c.report.to_record() != a.report.to_record());
}

TEST_CASE("netsim: conservation and causality") {
  struct Case {
    double loss, jitter, ack_loss;
    std::size_t queue;
  };
  const Case cases[] = {{0.0, 0.0, 0.0, 100}, {0.05, 0.0, 0.0, 100}, {0.02, 0.01, 0.02, 20}, {0.1, 0.003, 0.0, 5}};
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    std::vector<PathConfig> paths(2);
    for (auto& p : paths) {
      p.loss_rate = c.loss;
      p.jitter = c.jitter;
      p.ack_loss_rate = c.ack_loss;
      p.queue_capacity = c.queue;
      p.bandwidth = 5e6;
      p.seed = seed++;
    }
    paths[1].one_way_delay = 0.02;
    TransferOptions opt;
    opt.sender.scheduler = SchedulerKind::kMultiPath;
    opt.params.payload_size = 512;
    const Bytes stream = make_stream(600000, seed);

    std::ostringstream os;
    const auto report = run_transfer(paths, stream, opt, Tracer::to_stream(os));
    CHECK(report.byte_identical);
    for (const auto& pr : report.paths) {
      CHECK(pr.packets_sent == pr.delivered + pr.random_losses + pr.queue_drops + pr.in_flight_at_end);
    }

    // Every DATA arrival is no earlier than its send time plus propagation
    // delay plus the serialization time of the smallest DATA datagram.
    std::map<std::pair<int, int>, double> sent_at;
    std::istringstream in(os.str());
    std::string line;
    std::size_t checked = 0;
    double worst_slack = 1e9;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      const std::string side = j["side"], event = j["ev"];
      if (side == "snd" && event == "send") {
        sent_at[{j["path"].get<int>(), j["seq"].get<int>()}] = j["t"].get<double>();
      } else if (side == "rcv" && (event == "data" || event == "dependent" || event == "stale" || event == "drop")) {
        const int path = j["path"].get<int>();
        const auto it = sent_at.find({path, j["seq"].get<int>()});
        REQUIRE(it != sent_at.end());
        const double serialization = (12.0 + 3.0 + 512.0) * 8.0 / paths[path].bandwidth;
        const double slack = j["t"].get<double>() - (it->second + paths[path].one_way_delay + serialization);
        worst_slack = std::min(worst_slack, slack);
        ++checked;
      }
    }
    CHECK(checked > 1000);
    CHECK(worst_slack >= -1e-9);
  }
}

TEST_CASE("netsim: single 20 Mbps path moves the 11 MB file in 4 to 7 seconds") {
  PathConfig p;
  p.one_way_delay = 0.05;
  p.bandwidth = 20e6;
  TransferOptions opt;
  opt.sender.initial_ss_threshold = 256;
  const auto report = run_transfer({p}, make_stream(kPaperFileSize, 1), opt);
  MESSAGE("duration " << report.duration << " s, " << report.goodput_mbps << " Mbps");
  CHECK(report.byte_identical);
  CHECK(report.duration >= 4.0);
  CHECK(report.duration <= 7.0);
}

TEST_CASE("netsim: on one path both schedulers perform alike") {
  PathConfig p;
  p.bandwidth = 10e6;
  p.loss_rate = 0.02;
  TransferOptions single, multi;
  multi.sender.scheduler = SchedulerKind::kMultiPath;
  const Bytes stream = make_stream(3000000, 4);
  const auto a = run_transfer({p}, stream, single);
  const auto b = run_transfer({p}, stream, multi);
  CHECK(a.byte_identical);
  CHECK(b.byte_identical);
  CHECK(b.duration == doctest::Approx(a.duration).epsilon(0.10));
}

TEST_CASE("netsim: throughput series covers the transfer") {
  PathConfig p;
  p.bandwidth = 8e6;
  const auto report = run_transfer({p}, make_stream(1000000, 2), {});
  const std::string csv = report.throughput_csv();
  CHECK(csv.rfind("time_s,path_id,mbps\n", 0) == 0);
  double bytes = 0.0;
  for (const auto& s : report.throughput) bytes += s.mbps * 1e6 / 8.0 * 0.1;
  CHECK(bytes == doctest::Approx(1000000.0).epsilon(0.01));
  CHECK_FALSE(report.state.empty());
}
