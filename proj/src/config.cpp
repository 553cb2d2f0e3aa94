#include "eqfree/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace eqfree::cli {

namespace {

constexpr std::pair<Command, const char*> kCommands[] = {
    {Command::simulate, "simulate"},         {Command::branch, "branch"},
    {Command::fold2, "fold2"},               {Command::backward, "backward"},
    {Command::hopf, "hopf"},                 {Command::lifting_sweep, "lifting-sweep"},
    {Command::tskip_scan, "tskip-scan"},     {Command::fberror_scan, "fberror-scan"},
    {Command::converge_lab, "converge-lab"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw std::invalid_argument("not a number: '" + t + "'");
  return v;
}

long parse_integer(const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw std::invalid_argument("not an integer: '" + t + "'");
  return v;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Access>
Entry real(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_double(v); },
          [access](const RunConfig& c) {
            return format_number(access(const_cast<RunConfig&>(c)));
          }};
}

template <class Access>
Entry integer(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(access(c))>;
            const long x = parse_integer(v);
            if (x < static_cast<long>(std::numeric_limits<T>::min()) ||
                x > static_cast<long>(std::numeric_limits<T>::max()))
              throw std::invalid_argument("integer out of range");
            access(c) = static_cast<T>(x);
          },
          [access](const RunConfig& c) {
            return std::to_string(access(const_cast<RunConfig&>(c)));
          }};
}

template <class Access>
Entry list(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_list(v); },
          [access](const RunConfig& c) { return format_list(access(const_cast<RunConfig&>(c))); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"tau_inv",
       [](RunConfig& c, const std::string& v) {
         const double x = parse_double(v);
         if (!(x > 0.0)) throw std::invalid_argument("must be positive");
         c.model.tau = 1.0 / x;
       },
       [](const RunConfig& c) { return format_number(1.0 / c.model.tau); }},
      real("v0", FIELD(c.model.v0)),
      real("h", FIELD(c.model.h)),
      real("L", FIELD(c.model.L)),
      integer("N", FIELD(c.model.N)),
      real("mu", FIELD(c.model.mu)),
      real("abs_tol", FIELD(c.integrator.abs_tol)),
      real("rel_tol", FIELD(c.integrator.rel_tol)),
      real("initial_step", FIELD(c.integrator.initial_step)),
      real("max_step", FIELD(c.integrator.max_step)),
      integer("max_steps", FIELD(c.integrator.max_steps)),
      real("t_skip", FIELD(c.coarse.t_skip)),
      real("delta", FIELD(c.coarse.delta)),
      real("d_sigma", FIELD(c.coarse.d_sigma)),
      real("d_v0", FIELD(c.coarse.d_v0)),
      real("d_h", FIELD(c.coarse.d_h)),
      real("newton_tol", FIELD(c.coarse.newton_tol)),
      real("rate_tol", FIELD(c.coarse.rate_tol)),
      integer("newton_max_iter", FIELD(c.coarse.newton_max_iter)),
      real("nu", FIELD(c.coarse.nu)),
      real("step", FIELD(c.continuation.step)),
      integer("n_steps", FIELD(c.continuation.n_steps)),
      integer("max_halvings", FIELD(c.continuation.max_halvings)),
      real("sigma_stop", FIELD(c.continuation.sigma_stop)),
      real("v0_min", FIELD(c.continuation.v0_min)),
      real("v0_max", FIELD(c.continuation.v0_max)),
      real("h_min", FIELD(c.continuation.h_min)),
      real("h_max", FIELD(c.continuation.h_max)),
      real("p", FIELD(c.p)),
      real("seed_v0_first", FIELD(c.seed_v0_first)),
      real("seed_v0_second", FIELD(c.seed_v0_second)),
      real("seed_time", FIELD(c.seed_time)),
      real("t_end", FIELD(c.t_end)),
      real("sample_dt", FIELD(c.sample_dt)),
      real("backward_v0", FIELD(c.backward_v0)),
      real("delta_t", FIELD(c.delta_t)),
      integer("backward_steps", FIELD(c.backward_steps)),
      real("backward_offset", FIELD(c.backward_offset)),
      real("jam_time", FIELD(c.jam_time)),
      list("fb_deltas", FIELD(c.fb_deltas)),
      list("fb_tskips", FIELD(c.fb_tskips)),
      real("fb_sigma", FIELD(c.fb_sigma)),
      real("fold_h_min", FIELD(c.fold_h_min)),
      real("fold_h_max", FIELD(c.fold_h_max)),
      real("fold_t_skip", FIELD(c.fold_t_skip)),
      list("hopf_modes", FIELD(c.hopf_modes)),
      integer("hopf_points", FIELD(c.hopf_points)),
      list("p_values", FIELD(c.p_values)),
      real("sweep_a", FIELD(c.sweep_a)),
      real("sweep_b", FIELD(c.sweep_b)),
      real("direct_time", FIELD(c.direct_time)),
      integer("direct_points", FIELD(c.direct_points)),
      real("direct_v0_end", FIELD(c.direct_v0_end)),
      list("tskip_values", FIELD(c.tskip_values)),
      real("reference_tskip", FIELD(c.reference_tskip)),
      real("tskip_a", FIELD(c.tskip_a)),
      real("tskip_b", FIELD(c.tskip_b)),
      list("lab_epsilons", FIELD(c.lab_epsilons)),
      real("lab_fast_rate", FIELD(c.lab_fast_rate)),
      real("lab_x", FIELD(c.lab_x)),
      real("lab_slow_time", FIELD(c.lab_slow_time)),
      list("lab_tskips", FIELD(c.lab_tskips)),
      real("lab_c1", FIELD(c.lab_c1)),
      real("lab_c2", FIELD(c.lab_c2)),
      real("lab_mix", FIELD(c.lab_mix)),
      integer("threads", FIELD(c.threads)),
  };
  return table;
}

#undef FIELD

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(std::string(key) + ": " + what);
}

void in_envelope(double v, double lo, double hi, const char* key) {
  require(v >= lo && v <= hi, key,
          "value " + format_number(v) + " outside [" + format_number(lo) + ", " +
              format_number(hi) + "] (use --unsafe to override)");
}

void all_positive(const std::vector<double>& v, const char* key) {
  require(!v.empty(), key, "list must not be empty");
  for (double x : v) require(x > 0.0, key, "values must be positive");
}

// wraps the module-level validate() so the message names a key
template <class F>
void check_module(F&& f, const char* section) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

}  // namespace

int default_threads() {
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

const char* command_name(Command c) {
  for (const auto& [cmd, name] : kCommands)
    if (cmd == c) return name;
  return "?";
}

Command parse_command(const std::string& name) {
  for (const auto& [cmd, n] : kCommands)
    if (name == n) return cmd;
  throw ConfigError("unknown command '" + name + "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void RunConfig::validate(bool unsafe) const {
  require(model.N >= 2, "N", "must be at least 2");
  require(model.L > 0.0, "L", "must be positive");
  require(model.tau > 0.0, "tau_inv", "must be positive");
  require(model.mu >= 0.0, "mu", "must be non-negative");
  check_module([&] { model.validate(); }, "model");
  require(integrator.abs_tol > 0.0, "abs_tol", "must be positive");
  require(integrator.rel_tol > 0.0, "rel_tol", "must be positive");
  check_module([&] { integrator.validate(); }, "integrator");
  require(coarse.t_skip > 0.0, "t_skip", "must be positive");
  require(coarse.delta > 0.0, "delta", "must be positive");
  require(coarse.d_sigma > 0.0, "d_sigma", "must be positive");
  require(coarse.d_v0 > 0.0, "d_v0", "must be positive");
  require(coarse.d_h > 0.0, "d_h", "must be positive");
  require(coarse.newton_tol > 0.0, "newton_tol", "must be positive");
  require(coarse.rate_tol > 0.0, "rate_tol", "must be positive");
  require(coarse.newton_max_iter > 0, "newton_max_iter", "must be positive");
  require(coarse.nu > 0.0 && coarse.nu <= 1.0, "nu", "must lie in (0, 1]");
  require(threads > 0, "threads", "must be positive");
  require(continuation.step > 0.0, "step", "must be positive");
  require(continuation.n_steps > 0, "n_steps", "must be positive");
  require(continuation.max_halvings >= 0, "max_halvings", "must be non-negative");
  require(continuation.sigma_stop >= 0.0, "sigma_stop", "must be non-negative");
  require(continuation.v0_min < continuation.v0_max, "v0_min", "must be below v0_max");
  require(continuation.h_min < continuation.h_max, "h_min", "must be below h_max");
  require(p > 0.0, "p", "must be positive");
  require(seed_time > 0.0, "seed_time", "must be positive");
  require(seed_v0_first != seed_v0_second, "seed_v0_second", "must differ from seed_v0_first");
  require(t_end > 0.0, "t_end", "must be positive");
  require(sample_dt > 0.0, "sample_dt", "must be positive");
  require(delta_t < 0.0, "delta_t", "must be negative (backward integration)");
  require(backward_steps > 0, "backward_steps", "must be positive");
  require(backward_offset > 0.0, "backward_offset", "must be positive");
  require(jam_time > 0.0, "jam_time", "must be positive");
  all_positive(fb_deltas, "fb_deltas");
  all_positive(fb_tskips, "fb_tskips");
  require(std::isnan(fb_sigma) || fb_sigma > 0.0, "fb_sigma", "must be positive (or nan)");
  require(fold_h_min < fold_h_max, "fold_h_min", "must be below fold_h_max");
  require(fold_t_skip > 0.0, "fold_t_skip", "must be positive");
  require(!hopf_modes.empty(), "hopf_modes", "list must not be empty");
  for (double j : hopf_modes)
    require(j == std::floor(j) && j >= 1 && j <= model.N - 1 && 2 * j != model.N, "hopf_modes",
            "modes must be integers in [1, N-1] other than N/2");
  require(hopf_points >= 2, "hopf_points", "must be at least 2");
  all_positive(p_values, "p_values");
  require(sweep_a < sweep_b, "sweep_a", "must be below sweep_b");
  require(direct_time > 0.0, "direct_time", "must be positive");
  require(direct_points >= 2, "direct_points", "must be at least 2");
  all_positive(tskip_values, "tskip_values");
  require(reference_tskip > 0.0, "reference_tskip", "must be positive");
  require(tskip_a < tskip_b, "tskip_a", "must be below tskip_b");
  for (double e : lab_epsilons) require(e > 0.0 && e <= 0.1, "lab_epsilons", "values must lie in (0, 0.1]");
  require(lab_fast_rate > 0.0, "lab_fast_rate", "must be positive");
  require(lab_slow_time >= 0.0, "lab_slow_time", "must be non-negative");
  all_positive(lab_tskips, "lab_tskips");

  if (unsafe) return;
  in_envelope(model.v0, 0.8, 1.0, "v0");
  in_envelope(model.h, 1.0, 1.7, "h");
  in_envelope(continuation.v0_min, 0.8, 1.0, "v0_min");
  in_envelope(continuation.v0_max, 0.8, 1.0, "v0_max");
  in_envelope(continuation.h_min, 1.0, 1.7, "h_min");
  in_envelope(continuation.h_max, 1.0, 1.7, "h_max");
  in_envelope(seed_v0_first, 0.8, 1.0, "seed_v0_first");
  in_envelope(seed_v0_second, 0.8, 1.0, "seed_v0_second");
  in_envelope(backward_v0, 0.8, 1.0, "backward_v0");
  in_envelope(direct_v0_end, 0.8, 1.0, "direct_v0_end");
  in_envelope(fold_h_min, 1.0, 1.7, "fold_h_min");
  in_envelope(fold_h_max, 1.0, 1.7, "fold_h_max");
}

analysis::StudySetup RunConfig::study() const {
  analysis::StudySetup s;
  s.model = model;
  s.integrator = integrator;
  s.coarse = coarse;
  s.coarse.threads = threads;
  s.continuation = continuation;
  s.seed_v0_first = seed_v0_first;
  s.seed_v0_second = seed_v0_second;
  s.seed_time = seed_time;
  return s;
}

lab::ToySystem RunConfig::toy(double epsilon) const {
  lab::ToySystem t;
  t.epsilon = epsilon;
  t.fast_rate = lab_fast_rate;
  t.c1 = lab_c1;
  t.c2 = lab_c2;
  t.restriction_mix = lab_mix;
  return t;
}

RunConfig parse_config(const std::string& text, Command command, bool unsafe) {
  RunConfig config;
  config.command = command;
  std::map<std::string, const Entry*> by_key;
  for (const auto& e : entries()) by_key[e.key] = &e;

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  config.validate(unsafe);
  return config;
}

RunConfig load_config(const std::string& path, Command command, bool unsafe) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), command, unsafe);
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : entries()) out.emplace_back(e.key, e.get(config));
  return out;
}

std::string canonical_text(const RunConfig& config) {
  std::string s;
  for (const auto& [k, v] : config_entries(config)) s += k + " = " + v + "\n";
  return s;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  };
  feed(command_name(config.command));
  feed("\n");
  for (const auto& [k, v] : config_entries(config))
    if (k != "threads") feed(k + " = " + v + "\n");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace eqfree::cli
