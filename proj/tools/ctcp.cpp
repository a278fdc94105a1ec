// ctcp: file transfer over UDP and simulator experiments.
//
// Exit codes: 0 success, 1 transfer or run failure, 2 usage or input error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctcp/experiment.hpp"
#include "ctcp/netsim.hpp"
#include "ctcp/scenario.hpp"
#include "ctcp/udp.hpp"

namespace {

enum class Level { kError, kWarn, kInfo, kDebug, kTrace };

Level log_level() {
  const char* env = std::getenv("CTCP_LOG_LEVEL");
  const std::string v = env ? env : "info";
  if (v == "error") return Level::kError;
  if (v == "warn") return Level::kWarn;
  if (v == "debug") return Level::kDebug;
  if (v == "trace") return Level::kTrace;
  return Level::kInfo;
}

void log(Level at, const std::string& msg) {
  static const Level level = log_level();
  if (at > level) return;
  static const char* names[] = {"error", "warn", "info", "debug", "trace"};
  std::cerr << "ctcp: " << names[static_cast<int>(at)] << ": " << msg << '\n';
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Trace destination: --trace-out file, else stderr at CTCP_LOG_LEVEL=trace.
class TraceSink {
 public:
  explicit TraceSink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw UsageError("cannot open trace file " + path);
      tracer_ = ctcp::Tracer::to_stream(*file_);
    } else if (log_level() == Level::kTrace) {
      tracer_ = ctcp::Tracer::to_stream(std::cerr);
    }
  }
  const ctcp::Tracer& tracer() const { return tracer_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  ctcp::Tracer tracer_;
};

ctcp::Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  return ctcp::Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void print_paths(const ctcp::udp::TransferStats& s) {
  for (std::size_t k = 0; k < s.datagrams_sent.size(); ++k) {
    std::printf("  path %zu: %llu datagrams sent, %llu received, %llu data\n", k,
                static_cast<unsigned long long>(s.datagrams_sent[k]),
                static_cast<unsigned long long>(s.datagrams_received[k]),
                static_cast<unsigned long long>(s.data_packets[k]));
  }
}

struct ProtocolFlags {
  std::size_t blksize = 32;
  std::size_t numblks = 8;
  std::size_t payload_size = 1024;
};

void add_protocol_flags(CLI::App* cmd, ProtocolFlags& f) {
  cmd->add_option("--blksize", f.blksize, "Packets per coding block")->check(CLI::Range(1, 65535));
  cmd->add_option("--numblks", f.numblks, "Blocks held in the active window")->check(CLI::Range(1, 65535));
  cmd->add_option("--payload-size", f.payload_size, "Payload bytes per packet")->check(CLI::Range(1, 65000));
}

int cmd_send(const std::vector<std::string>& path_args, const std::string& file, const ProtocolFlags& pf,
             const std::string& scheduler, double ss_threshold, std::uint64_t seed, double timeout,
             const std::string& trace_out) {
  std::vector<ctcp::udp::PathSpec> paths;
  for (const auto& p : path_args) {
    try {
      paths.push_back(ctcp::udp::PathSpec::parse(p));
    } catch (const ctcp::udp::UdpError& e) {
      throw UsageError(e.what());
    }
  }
  const ctcp::Bytes data = read_file(file);
  if (data.empty()) throw UsageError("refusing to send an empty file");

  TraceSink trace(trace_out);
  ctcp::udp::SendOptions opt;
  opt.params = {pf.blksize, pf.numblks, pf.payload_size};
  const bool multi = scheduler == "multi" || (scheduler == "auto" && paths.size() > 1);
  opt.sender.scheduler = multi ? ctcp::SchedulerKind::kMultiPath : ctcp::SchedulerKind::kSinglePath;
  opt.sender.initial_ss_threshold = ss_threshold;
  opt.seed = seed;
  opt.max_duration = timeout;
  opt.tracer = trace.tracer();

  log(Level::kInfo, "sending " + std::to_string(data.size()) + " bytes over " + std::to_string(paths.size()) +
                        " path(s)");
  const auto stats = ctcp::udp::send_stream(paths, data, opt);
  std::printf("sent %llu bytes in %.3f s (%.2f Mbps)\n", static_cast<unsigned long long>(stats.bytes),
              stats.duration, stats.goodput_mbps);
  print_paths(stats);
  return 0;
}

int cmd_recv(const std::vector<std::string>& path_args, const std::string& file, const ctcp::udp::ReceiveOptions& base,
             const std::string& trace_out) {
  std::vector<ctcp::udp::Endpoint> locals;
  for (const auto& p : path_args) {
    try {
      locals.push_back(ctcp::udp::Endpoint::parse(p));
    } catch (const ctcp::udp::UdpError& e) {
      throw UsageError(e.what());
    }
  }
  if (locals.empty()) locals.push_back(ctcp::udp::Endpoint{"0.0.0.0", ctcp::udp::kDefaultPort});

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + file);

  TraceSink trace(trace_out);
  ctcp::udp::ReceiveOptions opt = base;
  opt.tracer = trace.tracer();

  for (const auto& l : locals) log(Level::kInfo, "listening on " + l.to_string());
  ctcp::Bytes data;
  const auto stats = ctcp::udp::receive_stream(locals, data, opt);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write to " + file + " failed");
  std::printf("received %llu bytes in %.3f s (%.2f Mbps)\n", static_cast<unsigned long long>(stats.bytes),
              stats.duration, stats.goodput_mbps);
  print_paths(stats);
  return 0;
}

ctcp::sim::Scenario load(const std::string& path) {
  try {
    return ctcp::sim::load_scenario(path);
  } catch (const ctcp::sim::ScenarioError& e) {
    throw UsageError(e.what());
  }
}

int cmd_experiment(const std::string& scenario_file, const std::string& out_dir, std::optional<int> reps,
                   std::optional<std::uint64_t> seed, unsigned jobs) {
  const auto sc = load(scenario_file);
  ctcp::sim::ExperimentOptions opt;
  opt.repetitions = reps;
  opt.base_seed = seed;
  opt.jobs = jobs;

  log(Level::kInfo, "running " + sc.name);
  const auto result = ctcp::sim::run_experiment(sc, opt);
  ctcp::sim::write_experiment(result, out_dir);
  std::cout << result.summary_csv();

  int failed = 0;
  for (const auto& r : result.runs) {
    if (r.completed) continue;
    ++failed;
    log(Level::kError, "run p=" + std::to_string(r.loss_rate) + " rep=" + std::to_string(r.repetition) +
                           " failed: " + r.error);
  }
  return failed == 0 ? 0 : 1;
}

int cmd_simulate(const std::string& scenario_file, std::optional<double> loss, std::uint64_t rep,
                 const std::string& trace_out, const std::string& csv_out) {
  auto sc = load(scenario_file);
  const std::uint64_t base = sc.base_seed;
  std::vector<ctcp::sim::PathConfig> paths = sc.paths;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    if (loss) paths[k].loss_rate = *loss;
    paths[k].seed = ctcp::sim::derive_seed(base, {0xA11ull, rep, k, sc.paths[k].seed});
  }
  ctcp::sim::TransferOptions opt;
  opt.params = sc.params;
  opt.sender = sc.sender;
  opt.timing = sc.timing;
  opt.limits = sc.limits;
  opt.coding_seed = ctcp::sim::derive_seed(base, {0xA11ull, rep, 0xC0DEull});

  TraceSink trace(trace_out);
  const auto stream = ctcp::sim::make_stream(sc.file_size, ctcp::sim::derive_seed(base, {0xF11Eull}));
  try {
    const auto report = ctcp::sim::run_transfer(paths, stream, opt, trace.tracer());
    std::cout << report.to_record() << '\n';
    if (!csv_out.empty()) {
      std::ofstream csv(csv_out);
      if (!csv) throw UsageError("cannot write " + csv_out);
      csv << report.throughput_csv();
    }
    return report.byte_identical ? 0 : 1;
  } catch (const ctcp::sim::StallError& e) {
    log(Level::kError, std::string(e.what()) + ": " + e.diagnostic());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CTCP: network-coded multipath transport over UDP, plus a network simulator"};
  app.require_subcommand(1);

  // send
  auto* send = app.add_subcommand("send", "Send a file to a ctcp receiver");
  std::vector<std::string> send_paths;
  std::string send_file, send_trace, scheduler = "auto";
  ProtocolFlags send_pf;
  double ss_threshold = 64.0, send_timeout = 3600.0;
  std::uint64_t send_seed = 1;
  send->add_option("--path", send_paths, "REMOTE[:PORT][@LOCAL[:PORT]], repeat for more paths")->required();
  send->add_option("--file", send_file, "File to send")->required();
  add_protocol_flags(send, send_pf);
  send->add_option("--scheduler", scheduler, "single, multi or auto")
      ->check(CLI::IsMember({"auto", "single", "multi"}));
  send->add_option("--ss-threshold", ss_threshold, "Initial slow-start threshold in packets")
      ->check(CLI::PositiveNumber);
  send->add_option("--seed", send_seed, "Coding coefficient seed");
  send->add_option("--timeout", send_timeout, "Give up after this many seconds")->check(CLI::PositiveNumber);
  send->add_option("--trace-out", send_trace, "Write JSON-lines trace here");

  // recv
  auto* recv = app.add_subcommand("recv", "Receive one file");
  std::vector<std::string> recv_paths;
  std::string recv_file, recv_trace;
  ctcp::udp::ReceiveOptions recv_opt;
  recv->add_option("--path", recv_paths, "Local HOST[:PORT] to listen on, repeat for more paths (default 0.0.0.0:9599)");
  recv->add_option("--file", recv_file, "Output file")->required();
  recv->add_option("--blksize", recv_opt.expect_blksize, "Refuse senders using another block size")
      ->check(CLI::Range(1, 65535));
  recv->add_option("--numblks", recv_opt.max_numblks, "Cap on the sender's block window")->check(CLI::Range(1, 65535));
  recv->add_option("--payload-size", recv_opt.expect_payload_size, "Refuse senders using another payload size")
      ->check(CLI::Range(1, 65535));
  recv->add_option("--accept-timeout", recv_opt.accept_timeout, "Seconds to wait for a sender (0 waits forever)")
      ->check(CLI::NonNegativeNumber);
  recv->add_option("--idle-timeout", recv_opt.idle_timeout, "Seconds of silence that abort a transfer")
      ->check(CLI::PositiveNumber);
  recv->add_option("--trace-out", recv_trace, "Write JSON-lines trace here");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a simulator scenario sweep and write CSVs");
  std::string scenario, out_dir = "results";
  std::optional<int> reps;
  std::optional<std::uint64_t> exp_seed;
  unsigned jobs = 1;
  exp->add_option("scenario", scenario, "Scenario file")->required();
  exp->add_option("--out", out_dir, "Output directory");
  exp->add_option("--repetitions", reps, "Override the scenario's repetitions")->check(CLI::PositiveNumber);
  exp->add_option("--seed", exp_seed, "Override the scenario's base seed");
  exp->add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);

  // simulate
  auto* simc = app.add_subcommand("simulate", "Run one simulated transfer and print its report");
  std::string sim_scenario, sim_trace, sim_csv;
  std::optional<double> sim_loss;
  std::uint64_t sim_rep = 0;
  simc->add_option("scenario", sim_scenario, "Scenario file")->required();
  simc->add_option("--loss", sim_loss, "Loss rate for every path")->check(CLI::Range(0.0, 1.0));
  simc->add_option("--repetition", sim_rep, "Repetition index (selects seeds)");
  simc->add_option("--trace-out", sim_trace, "Write JSON-lines trace here");
  simc->add_option("--csv-out", sim_csv, "Write the throughput series here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*send) {
      return cmd_send(send_paths, send_file, send_pf, scheduler, ss_threshold, send_seed, send_timeout, send_trace);
    }
    if (*recv) {
      return cmd_recv(recv_paths, recv_file, recv_opt, recv_trace);
    }
    if (*exp) return cmd_experiment(scenario, out_dir, reps, exp_seed, jobs);
    if (*simc) return cmd_simulate(sim_scenario, sim_loss, sim_rep, sim_trace, sim_csv);
  } catch (const UsageError& e) {
    log(Level::kError, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return 1;
  }
  return 2;
}
