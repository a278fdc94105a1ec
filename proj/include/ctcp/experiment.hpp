#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctcp/netsim.hpp"
#include "ctcp/scenario.hpp"

namespace ctcp::sim {

/// Derives an independent 64-bit seed from a base seed and a tuple of indices.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices);

/// Deterministic pseudo-random file contents.
Bytes make_stream(std::uint64_t size, std::uint64_t seed);

struct RunResult {
  double loss_rate = 0.0;
  int repetition = 0;
  /// Path the run was restricted to for a single-path baseline, else empty.
  std::optional<std::size_t> only_path;
  bool completed = false;
  std::string error;
  TransferReport report;
};

struct SweepRow {
  double loss_rate = 0.0;
  int runs = 0;
  int completed = 0;
  double mean_duration = 0.0;
  double mean_goodput_mbps = 0.0;
  std::vector<double> path_mbps;         // mean per path, multipath runs
  std::vector<double> single_path_mbps;  // mean goodput of each path alone
};

struct ExperimentResult {
  std::string name;
  std::size_t num_paths = 0;
  std::vector<RunResult> runs;
  std::vector<SweepRow> rows;

  /// loss_rate,runs,completed,mean_duration_s,mean_goodput_mbps,path<k>_mbps...
  std::string summary_csv() const;
};

struct ExperimentOptions {
  std::optional<int> repetitions;          // overrides the scenario
  std::optional<std::uint64_t> base_seed;  // overrides the scenario
  unsigned jobs = 1;                       // parallel workers
  bool record_series = true;
};

/// Runs every (loss rate, repetition) cell of the scenario, plus one
/// single-path baseline per path when the scenario asks for them. Results
/// depend only on the scenario and seeds, never on `jobs`.
ExperimentResult run_experiment(const Scenario& scenario, const ExperimentOptions& options = {});

/// Writes summary.csv, runs.jsonl and one throughput CSV per multipath run.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir);

}  // namespace ctcp::sim
