#include "ctcp/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace ctcp::sim {

namespace {

struct Job {
  std::size_t loss_index = 0;
  bool override_loss = true;  // false: each path keeps its configured loss
  double loss_rate = 0.0;
  int repetition = 0;
  std::optional<std::size_t> only_path;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

RunResult run_job(const Scenario& sc, const Job& job, std::uint64_t base, const Bytes& stream, bool series) {
  RunResult out;
  out.loss_rate = job.loss_rate;
  out.repetition = job.repetition;
  out.only_path = job.only_path;

  const auto li = static_cast<std::uint64_t>(job.loss_index);
  const auto rep = static_cast<std::uint64_t>(job.repetition);

  std::vector<PathConfig> paths;
  for (std::size_t k = 0; k < sc.paths.size(); ++k) {
    if (job.only_path && *job.only_path != k) continue;
    PathConfig p = sc.paths[k];
    if (job.override_loss) p.loss_rate = job.loss_rate;
    p.seed = derive_seed(base, {li, rep, k, sc.paths[k].seed});
    paths.push_back(p);
  }

  TransferOptions opt;
  opt.params = sc.params;
  opt.sender = sc.sender;
  if (job.only_path) opt.sender.scheduler = SchedulerKind::kSinglePath;
  opt.timing = sc.timing;
  opt.limits = sc.limits;
  opt.coding_seed = derive_seed(base, {li, rep, 0xC0DEull});
  opt.record_series = series && !job.only_path;

  try {
    out.report = run_transfer(paths, stream, opt);
    out.completed = out.report.byte_identical;
    if (!out.completed) out.error = "delivered stream differs from the source";
  } catch (const StallError& e) {
    out.error = std::string(e.what()) + " [" + e.diagnostic() + "]";
  }
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t i : indices) h = splitmix64(h ^ splitmix64(i + 0x632BE59BD9B4E019ull));
  return h;
}

Bytes make_stream(std::uint64_t size, std::uint64_t seed) {
  Bytes out(size);
  SeededRng rng(seed);
  std::size_t i = 0;
  for (; i + 8 <= out.size(); i += 8) {
    std::uint64_t w = rng.next();
    for (int b = 0; b < 8; ++b, w >>= 8) out[i + b] = static_cast<std::uint8_t>(w);
  }
  for (; i < out.size(); ++i) out[i] = rng.next_byte();
  return out;
}

ExperimentResult run_experiment(const Scenario& sc, const ExperimentOptions& options) {
  const int reps = options.repetitions.value_or(sc.repetitions);
  const std::uint64_t base = options.base_seed.value_or(sc.base_seed);
  if (reps < 1) throw std::invalid_argument("run_experiment: repetitions must be >= 1");

  std::vector<double> rates = sc.loss_rates;
  const bool sweep = !rates.empty();
  if (!sweep) rates.push_back(sc.paths.front().loss_rate);

  std::vector<Job> jobs;
  for (std::size_t li = 0; li < rates.size(); ++li) {
    for (int r = 0; r < reps; ++r) {
      jobs.push_back(Job{li, sweep, rates[li], r, std::nullopt});
      if (sc.single_path_baselines && sc.paths.size() > 1) {
        for (std::size_t k = 0; k < sc.paths.size(); ++k) jobs.push_back(Job{li, sweep, rates[li], r, k});
      }
    }
  }

  const Bytes stream = make_stream(sc.file_size, derive_seed(base, {0xF11Eull}));
  ExperimentResult res;
  res.name = sc.name;
  res.num_paths = sc.paths.size();
  res.runs.resize(jobs.size());

  auto work = [&](const Job& job) { return run_job(sc, job, base, stream, options.record_series); };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) res.runs[i] = work(jobs[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) res.runs[i] = work(jobs[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (double rate : rates) {
    SweepRow row;
    row.loss_rate = rate;
    row.path_mbps.assign(res.num_paths, 0.0);
    const bool baselines = sc.single_path_baselines && res.num_paths > 1;
    if (baselines) row.single_path_mbps.assign(res.num_paths, 0.0);
    std::vector<int> single_done(res.num_paths, 0);

    for (const auto& r : res.runs) {
      if (r.loss_rate != rate) continue;
      if (r.only_path) {
        if (!r.completed) continue;
        row.single_path_mbps[*r.only_path] += r.report.goodput_mbps;
        ++single_done[*r.only_path];
        continue;
      }
      ++row.runs;
      if (!r.completed) continue;
      ++row.completed;
      row.mean_duration += r.report.duration;
      row.mean_goodput_mbps += r.report.goodput_mbps;
      for (std::size_t k = 0; k < res.num_paths; ++k) row.path_mbps[k] += r.report.paths[k].mbps;
    }
    if (row.completed > 0) {
      const double n = row.completed;
      row.mean_duration /= n;
      row.mean_goodput_mbps /= n;
      for (auto& v : row.path_mbps) v /= n;
    }
    for (std::size_t k = 0; k < row.single_path_mbps.size(); ++k) {
      if (single_done[k] > 0) row.single_path_mbps[k] /= single_done[k];
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

std::string ExperimentResult::summary_csv() const {
  std::string out = "loss_rate,runs,completed,mean_duration_s,mean_goodput_mbps";
  for (std::size_t k = 0; k < num_paths; ++k) out += ",path" + std::to_string(k) + "_mbps";
  const bool baselines = !rows.empty() && !rows.front().single_path_mbps.empty();
  if (baselines) {
    for (std::size_t k = 0; k < num_paths; ++k) out += ",single_path" + std::to_string(k) + "_mbps";
    out += ",single_path_sum_mbps";
  }
  out += "\n";
  for (const auto& r : rows) {
    out += fmt(r.loss_rate) + "," + std::to_string(r.runs) + "," + std::to_string(r.completed) + "," +
           fmt(r.mean_duration) + "," + fmt(r.mean_goodput_mbps);
    for (double v : r.path_mbps) out += "," + fmt(v);
    if (baselines) {
      double sum = 0.0;
      for (double v : r.single_path_mbps) {
        out += "," + fmt(v);
        sum += v;
      }
      out += "," + fmt(sum);
    }
    out += "\n";
  }
  return out;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(out_dir / name);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    return f;
  };

  open("summary.csv") << result.summary_csv();

  auto runs = open("runs.jsonl");
  for (const auto& r : result.runs) {
    nlohmann::ordered_json j;
    j["loss_rate"] = r.loss_rate;
    j["repetition"] = r.repetition;
    j["only_path"] = r.only_path ? nlohmann::ordered_json(*r.only_path) : nlohmann::ordered_json(nullptr);
    j["completed"] = r.completed;
    if (r.completed) {
      j["report"] = nlohmann::ordered_json::parse(r.report.to_record());
    } else {
      j["error"] = r.error;
    }
    runs << j.dump() << "\n";
  }

  for (const auto& r : result.runs) {
    if (r.only_path || !r.completed || r.report.throughput.empty()) continue;
    open("throughput_p" + fmt(r.loss_rate) + "_r" + std::to_string(r.repetition) + ".csv")
        << r.report.throughput_csv();
  }
}

}  // namespace ctcp::sim
