#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gbsel/data.hpp"
#include "gbsel/eval.hpp"
#include "gbsel/model.hpp"
#include "gbsel/sampler.hpp"
#include "gbsel/selector.hpp"

namespace gbsel {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  ModelConfig model;
  McmcConfig mcmc;
  SelectorConfig selector;
  GeneratorConfig generator;
  EvalOptions eval;
  std::optional<std::filesystem::path> corpus_path;
  std::filesystem::path out_dir = ".";
  int jobs = 1;
};

/// Parses the JSON run configuration. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Runs the tool on argv-style arguments (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gbsel
