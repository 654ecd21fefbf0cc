#pragma once

#include <string>
#include <vector>

#include "gbsel/sampler.hpp"

namespace gbsel {

struct MonitoredScalar {
  std::string name;
  double ess = 0.0;
  double rhat = 1.0;
  bool degenerate = false;  // zero variance: ess and rhat undefined (NaN)
};

struct ConvergenceSummary {
  std::vector<MonitoredScalar> scalars;
};

/// Split R-hat over chains of equal length. Returns NaN for zero within-chain variance.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator, computed on split chains. Returns NaN for a constant trace.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// ESS and split R-hat of the log-posterior trace and of a fixed random
/// projection of the flattened parameters. R-hat is floored at 1.
ConvergenceSummary convergence_summary(const PosteriorDraws& draws);

}  // namespace gbsel
