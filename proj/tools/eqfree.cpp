// eqfree <command> --config <path> [--out <dir>] [--threads N] [--unsafe]

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "eqfree/runner.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, const std::string& out_dir) {
  const nlohmann::json err{{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  if (!out_dir.empty()) {
    try {
      std::filesystem::create_directories(out_dir);
      eqfree::cli::write_text(std::filesystem::path(out_dir) / "run.json", err.dump(2) + "\n");
    } catch (const std::exception&) {
      // the error on stderr is all we can do
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equation-free bifurcation analysis of the optimal velocity traffic model"};
  std::string command, config_path, out_dir = "eqfree_out";
  int threads = 0;
  bool unsafe = false;
  app.add_option("command", command,
                 "simulate | branch | fold2 | backward | hopf | lifting-sweep | tskip-scan | "
                 "fberror-scan | converge-lab")
      ->required();
  app.add_option("--config", config_path, "key = value configuration file")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (overrides the config)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--unsafe", unsafe, "allow parameters outside the usual envelope");
  CLI11_PARSE(app, argc, argv);

  eqfree::cli::RunConfig config;
  try {
    config = eqfree::cli::load_config(config_path, eqfree::cli::parse_command(command), unsafe);
    if (threads > 0) config.threads = threads;
  } catch (const eqfree::cli::ConfigError& e) {
    return fail("config", e.what(), "");
  }

  try {
    const auto result = eqfree::cli::run(config, out_dir);
    for (const auto& f : result.files) std::cout << (std::filesystem::path(out_dir) / f).string() << "\n";
    std::cout << (std::filesystem::path(out_dir) / "run.json").string() << "\n";
    if (result.truncated) {
      std::cerr << "warning: a continuation was truncated after corrector failures; "
                   "partial results were written\n";
      return 3;
    }
  } catch (const std::exception& e) {
    return fail("run", e.what(), out_dir);
  }
  return 0;
}
