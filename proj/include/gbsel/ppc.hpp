#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gbsel/model.hpp"
#include "gbsel/rng.hpp"
#include "gbsel/sampler.hpp"

namespace gbsel {

/// Posterior predictive check of one learning rate with the log-likelihood
/// diagnostic. Larger diagnostic values mean closer agreement.
struct PpcResult {
  std::vector<double> ref_diagnostics;    // s(y_rep_n, theta_n)
  double observed_at_mean = 0.0;          // s(y_obs, posterior mean)
  std::vector<double> observed_at_draws;  // s(y_obs, theta_n)
  double p_mean = 0.0;    // observed diagnostic at the posterior mean
  double p_paired = 0.0;  // per-draw paired comparison
  double p_avg = 0.0;     // mean of observed diagnostics across draws
  double lambda = 1.0;
};

/// Replicate with the same covariates and snippet lengths: each sense is drawn
/// from the snippet's sense posterior, then each word from psi_tilde[z, t].
Corpus replicate_dataset(const Corpus& corpus, const ParamState& draw, Rng& rng);
Corpus replicate_dataset(const Corpus& corpus, const ProbParams& probs, Rng& rng);

double diagnostic(const Corpus& corpus, const ParamState& params);
double diagnostic(const Corpus& corpus, const ProbParams& probs);

/// Fraction of `ref` strictly below `observed`.
double ppc_pvalue(std::span<const double> ref, double observed);

/// Fills p_mean, p_paired and p_avg from the diagnostic fields.
void compute_pvalues(PpcResult& result);

/// One replicate per draw; replicate n uses RNG stream derive_seed(seed, n).
PpcResult run_ppc(const Corpus& corpus, const PosteriorDraws& draws, std::uint64_t seed,
                  int jobs = 1);

}  // namespace gbsel
