// Executes a RunConfig and writes its CSV tables and run.json metadata.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "eqfree/config.hpp"

namespace eqfree::cli {

struct RunResult {
  nlohmann::json summary;           // command specific results, also in run.json
  std::vector<std::string> files;   // written files, relative to the output directory
  bool truncated = false;           // some continuation stopped on corrector failure
};

/// Runs the configured command, writing outputs into `out_dir` (created if
/// needed). Module failures propagate as exceptions.
RunResult run(const RunConfig& config, const std::filesystem::path& out_dir);

/// run.json content: command, config hash, every config value, fixed
/// implementation constants and the result summary.
nlohmann::json metadata(const RunConfig& config, const RunResult& result);

/// Writes `text` with LF line endings as-is.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace eqfree::cli
