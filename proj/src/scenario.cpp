#include "ctcp/scenario.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ctcp::sim {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ScenarioError("scenario line " + std::to_string(line) + ": " + msg);
}

double to_double(std::string_view v, int line) {
  // std::from_chars for double needs gcc 11+, which is the floor here.
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) fail(line, "expected a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(std::string_view v, int line) {
  const double d = to_double(v, line);
  if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
    fail(line, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return static_cast<std::uint64_t>(d);
}

bool to_bool(std::string_view v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(line, "expected a boolean, got '" + std::string(v) + "'");
}

void set_experiment(Scenario& s, std::string_view key, std::string_view v, int line) {
  if (key == "name") s.name = std::string(v);
  else if (key == "file_size") s.file_size = to_uint(v, line);
  else if (key == "repetitions") s.repetitions = static_cast<int>(to_uint(v, line));
  else if (key == "base_seed") s.base_seed = to_uint(v, line);
  else if (key == "single_path_baselines") s.single_path_baselines = to_bool(v, line);
  else if (key == "loss_rates") {
    s.loss_rates.clear();
    std::size_t pos = 0;
    while (pos <= v.size()) {
      const auto comma = v.find(',', pos);
      const auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (item.empty()) fail(line, "empty loss rate");
      s.loss_rates.push_back(to_double(item, line));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
  } else {
    fail(line, "unknown [experiment] key '" + std::string(key) + "'");
  }
}

void set_protocol(Scenario& s, std::string_view key, std::string_view v, int line) {
  auto& c = s.sender;
  if (key == "blksize") s.params.blksize = to_uint(v, line);
  else if (key == "numblks") s.params.numblks = to_uint(v, line);
  else if (key == "payload_size") s.params.payload_size = to_uint(v, line);
  else if (key == "scheduler") {
    if (v == "single") c.scheduler = SchedulerKind::kSinglePath;
    else if (v == "multi") c.scheduler = SchedulerKind::kMultiPath;
    else fail(line, "scheduler must be 'single' or 'multi'");
  } else if (key == "currblk_guard") {
    if (v == "needed") c.currblk_guard = CurrblkGuard::kNeeded;
    else if (v == "literal") c.currblk_guard = CurrblkGuard::kLiteral;
    else fail(line, "currblk_guard must be 'needed' or 'literal'");
  }
  else if (key == "alpha_rtt") c.alpha_rtt = to_double(v, line);
  else if (key == "mu") c.mu = to_double(v, line);
  else if (key == "nu") c.nu = to_double(v, line);
  else if (key == "gamma") c.gamma = to_double(v, line);
  else if (key == "alpha_vegas") c.alpha_vegas = to_double(v, line);
  else if (key == "beta_vegas") c.beta_vegas = to_double(v, line);
  else if (key == "initial_tokens") c.initial_tokens = to_double(v, line);
  else if (key == "token_floor") c.token_floor = to_double(v, line);
  else if (key == "initial_ss_threshold") c.initial_ss_threshold = to_double(v, line);
  else if (key == "initial_rtt") c.initial_rtt = to_double(v, line);
  else if (key == "initial_p") c.initial_p = to_double(v, line);
  else if (key == "initial_p_stdlong") c.initial_p_stdlong = to_double(v, line);
  else if (key == "inflight_horizon") c.inflight_horizon = to_double(v, line);
  else fail(line, "unknown [protocol] key '" + std::string(key) + "'");
}

void set_limits(Scenario& s, std::string_view key, std::string_view v, int line) {
  if (key == "tick_interval") s.limits.tick_interval = to_double(v, line);
  else if (key == "sample_interval") s.limits.sample_interval = to_double(v, line);
  else if (key == "stall_timeout") s.limits.stall_timeout = to_double(v, line);
  else if (key == "max_time") s.limits.max_time = to_double(v, line);
  else fail(line, "unknown [limits] key '" + std::string(key) + "'");
}

void set_path(PathConfig& p, std::string_view key, std::string_view v, int line) {
  if (key == "delay") p.one_way_delay = to_double(v, line);
  else if (key == "bandwidth") p.bandwidth = to_double(v, line);
  else if (key == "loss") p.loss_rate = to_double(v, line);
  else if (key == "queue") p.queue_capacity = to_uint(v, line);
  else if (key == "seed") p.seed = to_uint(v, line);
  else if (key == "jitter") p.jitter = to_double(v, line);
  else if (key == "ack_loss") p.ack_loss_rate = to_double(v, line);
  else fail(line, "unknown [path] key '" + std::string(key) + "'");
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  enum class Section { kNone, kExperiment, kProtocol, kLimits, kPath } section = Section::kNone;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name == "experiment") section = Section::kExperiment;
      else if (name == "protocol") section = Section::kProtocol;
      else if (name == "limits") section = Section::kLimits;
      else if (name == "path") {
        section = Section::kPath;
        s.paths.emplace_back();
        s.paths.back().seed = s.paths.size();
      } else {
        fail(line_no, "unknown section [" + std::string(name) + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(line_no, "expected key = value");

    switch (section) {
      case Section::kExperiment: set_experiment(s, key, value, line_no); break;
      case Section::kProtocol: set_protocol(s, key, value, line_no); break;
      case Section::kLimits: set_limits(s, key, value, line_no); break;
      case Section::kPath: set_path(s.paths.back(), key, value, line_no); break;
      case Section::kNone: fail(line_no, "key outside of a section");
    }
  }

  if (s.paths.empty()) throw ScenarioError("scenario: at least one [path] section is required");
  if (s.repetitions < 1) throw ScenarioError("scenario: repetitions must be >= 1");
  if (s.file_size == 0) throw ScenarioError("scenario: file_size must be >= 1");
  if (s.params.blksize == 0 || s.params.numblks == 0 || s.params.payload_size == 0) {
    throw ScenarioError("scenario: blksize, numblks and payload_size must be >= 1");
  }
  for (double p : s.loss_rates) {
    if (!(p >= 0.0 && p <= 1.0)) throw ScenarioError("scenario: loss rates must be in [0, 1]");
  }
  for (const auto& p : s.paths) {
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(std::string("scenario: ") + e.what());
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ScenarioError("cannot open scenario file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace ctcp::sim
