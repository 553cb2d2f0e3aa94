#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "eqfree/config.hpp"
#include "eqfree/runner.hpp"

using namespace eqfree;
using namespace eqfree::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text, Command c = Command::branch, bool unsafe = false) {
  try {
    parse_config(text, c, unsafe);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("eqfree_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = parse_config("", Command::branch);
  CHECK(c.model.tau == doctest::Approx(1 / 1.7).epsilon(1e-15));
  CHECK(c.model.L == 60.0);
  CHECK(c.model.N == 60);
  CHECK(c.model.mu == 0.1);
  CHECK(c.continuation.step == 1e-3);
  CHECK(c.coarse.delta == 2000.0);
  CHECK(c.coarse.t_skip == 300.0);
  CHECK(c.delta_t == -5000.0);
  CHECK(c.integrator.abs_tol == 1e-8);
  CHECK(c.integrator.rel_tol == 1e-8);
  CHECK(c.continuation.v0_min == 0.8);
  CHECK(c.continuation.v0_max == 1.0);
  CHECK(c.continuation.h_min == 1.0);
  CHECK(c.continuation.h_max == 1.7);
  CHECK(c.p == 1.0);
  CHECK(c.fold_t_skip == 2000.0);
}

TEST_CASE("overrides and comments") {
  const auto c = parse_config("# study\nv0 = 0.91\n  h=1.2   # inline\n\ntau_inv = 2\n"
                              "p_values = 0.9, 1.1\n",
                              Command::branch);
  CHECK(c.model.v0 == 0.91);
  CHECK(c.model.h == 1.2);
  CHECK(c.model.tau == 0.5);
  CHECK(c.p_values == std::vector<double>{0.9, 1.1});
  CHECK(c.model.N == 60);
}

TEST_CASE("errors name the line or the key") {
  CHECK(error_of("N = 1").find("N") != std::string::npos);
  CHECK(error_of("v0 = 0.91\nh 1.2\n").find("line 2") != std::string::npos);
  CHECK(error_of("v0 = 0.91\nvelocity = 1\n").find("unknown key 'velocity'") != std::string::npos);
  CHECK(error_of("h = 1.2\nh = 1.3\n").find("duplicate") != std::string::npos);
  CHECK(error_of("\n\nv0 = fast\n").find("line 3") != std::string::npos);
  CHECK(error_of("t_skip = -1").find("t_skip") != std::string::npos);
  CHECK(error_of("fold_t_skip = 0").find("fold_t_skip") != std::string::npos);

  // outside the usual envelope only with unsafe
  CHECK(error_of("v0 = 1.3").find("v0") != std::string::npos);
  CHECK(error_of("v0 = 1.3", Command::branch, true).empty());
  CHECK(error_of("h = 0.5").find("h") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/eqfree.cfg", Command::branch), ConfigError);
  CHECK_THROWS_AS(parse_command("fold3"), ConfigError);
  CHECK(parse_command("lifting-sweep") == Command::lifting_sweep);
  CHECK(std::string(command_name(Command::fberror_scan)) == "fberror-scan");
}

TEST_CASE("config hash") {
  const auto a = parse_config("v0 = 0.91\n", Command::branch);
  auto b = parse_config("# same\nv0=0.91", Command::branch);
  b.threads = a.threads + 3;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(parse_config("v0 = 0.92\n", Command::branch)));
  CHECK(config_hash(a) != config_hash(parse_config("v0 = 0.91\n", Command::hopf)));

  // canonical text parses back to the same configuration
  const auto again = parse_config(canonical_text(a), Command::branch);
  CHECK(canonical_text(again) == canonical_text(a));
}

TEST_CASE("number format") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-1.0 / 0.0) == "-inf");
}

TEST_CASE("hopf command") {
  auto c = parse_config("h_min = 1.0\nh_max = 1.7\n", Command::hopf);
  const auto dir = scratch("hopf");
  const auto r = run(c, dir);
  write_text(dir / "run.json", metadata(c, r).dump(2) + "\n");
  const auto csv = slurp(dir / "hopf.csv");
  CHECK(csv.rfind("h,j,v0,omega\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * c.hopf_points);
  CHECK(csv.find('\r') == std::string::npos);
  const auto meta = nlohmann::json::parse(slurp(dir / "run.json"));
  CHECK(meta["config_hash"] == config_hash(c));
  CHECK(meta["command"] == "hopf");

  const auto dir2 = scratch("hopf2");
  c.threads = 1;
  const auto r2 = run(c, dir2);
  write_text(dir2 / "run.json", metadata(c, r2).dump(2) + "\n");
  CHECK(slurp(dir2 / "hopf.csv") == csv);
  // threads are recorded but do not enter the hash
  CHECK(nlohmann::json::parse(slurp(dir2 / "run.json"))["config_hash"] == meta["config_hash"]);
}

TEST_CASE("simulate and converge-lab commands") {
  auto c = parse_config("v0 = 0.87\nt_end = 2000\nsample_dt = 500\n", Command::simulate);
  const auto dir = scratch("simulate");
  run(c, dir);
  const auto csv = slurp(dir / "simulate.csv");
  CHECK(csv.rfind("t,sigma\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  const auto dir2 = scratch("simulate2");
  run(c, dir2);
  CHECK(slurp(dir2 / "simulate.csv") == csv);

  auto lab = parse_config("", Command::converge_lab);
  const auto ldir = scratch("lab");
  const auto r = run(lab, ldir);
  CHECK(fs::exists(ldir / "convergence.csv"));
  MESSAGE(r.summary.dump());
}
