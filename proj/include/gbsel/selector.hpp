#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gbsel/eval.hpp"
#include "gbsel/model.hpp"
#include "gbsel/ppc.hpp"
#include "gbsel/sampler.hpp"

namespace gbsel {

/// Default grid 1.0, 0.9, ..., 0.1.
std::vector<double> default_grid();

struct SelectorConfig {
  std::vector<double> grid = default_grid();  // starts at 1.0, strictly decreasing, in (0, 1]
  double alpha = 0.1;
  McmcConfig mcmc;              // mcmc.seed is the base seed of the sweep
  bool early_stop = false;      // skip smaller lambdas once p_mean hits 0
  EvalOptions eval;
  int jobs = 1;                 // grid points run concurrently

  void validate() const;
};

/// Sampler and replicate seeds for grid point `index`.
std::uint64_t fit_seed(std::uint64_t base, std::size_t index);
std::uint64_t ppc_seed(std::uint64_t base, std::size_t index);

struct LambdaRecord {
  double lambda = 1.0;
  bool ok = false;
  bool skipped = false;
  std::string error;
  double p_mean = 0.0;
  double p_paired = 0.0;
  double p_avg = 0.0;
  std::optional<double> brier;
  bool collapsed = false;
  double accept_rate = 0.0;
  double divergent_fraction = 0.0;
  std::string draws_file;  // relative to the output directory, empty if not persisted
  std::string ppc_file;
};

struct LambdaReport {
  std::vector<LambdaRecord> records;  // grid order
  std::optional<double> selected;
  double alpha = 0.1;
};

/// argmin of p over {lambda : p > alpha}; ties go to the smaller lambda.
std::optional<double> choose(const std::map<double, double>& pvalues, double alpha);

/// Sweeps the grid: fit, relabel, PPC, and (if labels exist) score each lambda,
/// then selects on p_mean. With `out_dir` set, draws and PPC results of every
/// lambda are written there and referenced in the report.
LambdaReport select_lambda(const Corpus& corpus, const ModelConfig& model, const SelectorConfig& sel,
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace gbsel
