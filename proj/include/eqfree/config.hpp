// Run configuration: flat `key = value` text, one key per line, `#` starts a
// comment, list values are comma separated. Omitted keys keep their defaults.

#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqfree/analysis.hpp"
#include "eqfree/convergence_lab.hpp"

namespace eqfree::cli {

enum class Command {
  simulate,
  branch,
  fold2,
  backward,
  hopf,
  lifting_sweep,
  tskip_scan,
  fberror_scan,
  converge_lab,
};

const char* command_name(Command c);
/// Throws ConfigError for unknown names.
Command parse_command(const std::string& name);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Available hardware threads, at least 1.
int default_threads();

struct RunConfig {
  Command command = Command::branch;

  micro::ModelParams model;
  micro::IntegratorSettings integrator;
  CoarseSettings coarse;
  continuation::ContinuationOptions continuation;

  // seeding of jam branches
  double p = 1.0;
  double seed_v0_first = 0.91;
  double seed_v0_second = 0.90;
  double seed_time = 5e4;

  // simulate
  double t_end = 5e4;
  double sample_dt = 100.0;

  // backward / fberror-scan
  double backward_v0 = 0.884;
  double delta_t = -5000.0;
  int backward_steps = 30;
  double backward_offset = 0.01;
  double jam_time = 5e4;
  std::vector<double> fb_deltas{300, 600, 1200, 2400, 4800};
  std::vector<double> fb_tskips{300, 600, 1000, 1500, 2000};
  double fb_sigma = std::numeric_limits<double>::quiet_NaN();  // nan: from the backward trajectory

  // fold2
  double fold_h_min = 1.1;
  double fold_h_max = 1.25;
  double fold_t_skip = 2000;  // the branch seeding it uses coarse.t_skip

  // hopf
  std::vector<double> hopf_modes{1, 2, 3, 4};
  int hopf_points = 71;

  // lifting-sweep
  std::vector<double> p_values{0.95, 1.0, 1.05};
  double sweep_a = 0.125;
  double sweep_b = 0.25;
  double direct_time = 3e5;
  int direct_points = 20;
  double direct_v0_end = 0.8805;

  // tskip-scan
  std::vector<double> tskip_values{300, 2000, 4000};
  double reference_tskip = 2000.0;
  double tskip_a = 0.01;
  double tskip_b = 0.28;

  // converge-lab
  std::vector<double> lab_epsilons{0.001, 0.01, 0.05};
  double lab_fast_rate = 1.0;
  double lab_x = 0.5;
  double lab_slow_time = 0.1;  // delta = lab_slow_time / epsilon
  std::vector<double> lab_tskips{2, 4, 6, 8, 10};
  double lab_c1 = 0.3;
  double lab_c2 = -0.2;
  double lab_mix = 0.1;

  int threads = default_threads();

  /// Checks every value; outside the usual parameter envelope
  /// (v0 in [0.8, 1.0], h in [1.0, 1.7]) only if `unsafe` is false.
  /// Throws ConfigError naming the offending key.
  void validate(bool unsafe = false) const;

  [[nodiscard]] analysis::StudySetup study() const;
  [[nodiscard]] lab::ToySystem toy(double epsilon) const;
};

/// Parses configuration text. Errors carry the line number.
RunConfig parse_config(const std::string& text, Command command, bool unsafe = false);

/// Reads and parses a configuration file.
RunConfig load_config(const std::string& path, Command command, bool unsafe = false);

/// All keys with their current values as `key = value` lines in a fixed order.
std::string canonical_text(const RunConfig& config);

/// Ordered (key, value) pairs, values formatted as in canonical_text.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

/// FNV-1a hash of the canonical text without the `threads` key, as 16 hex digits.
std::string config_hash(const RunConfig& config);

/// A double with 17 significant digits (C locale); "nan",
/// "inf" and "-inf" for non-finite values.
std::string format_number(double v);

}  // namespace eqfree::cli
