#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctcp/netsim.hpp"
#include "ctcp/params.hpp"

namespace ctcp::sim {

/// A simulation scenario: the path set, protocol settings and the
/// experiment sweep. Text format, one `key = value` per line, grouped in
/// [experiment], [protocol], [limits] and repeated [path] sections; `#`
/// starts a comment.
struct Scenario {
  std::string name = "scenario";
  std::uint64_t file_size = 1 << 20;
  int repetitions = 1;
  std::uint64_t base_seed = 1;
  std::vector<double> loss_rates;    // empty: use each path's own loss
  bool single_path_baselines = false;

  ProtocolParams params;
  SenderConfig sender;
  SessionTiming timing;
  SimLimits limits;
  std::vector<PathConfig> paths;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& file);

}  // namespace ctcp::sim
