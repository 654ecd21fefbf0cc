#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbsel/model.hpp"

namespace gbsel {

struct McmcConfig {
  int num_draws = 1000;  // per chain, after warmup
  int num_warmup = 1000;
  int num_chains = 4;
  int leapfrog_min = 8;
  int leapfrog_max = 24;
  double target_accept = 0.8;
  double init_sd = 0.1;
  double max_divergent_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Post-warmup draws of every chain, concatenated chain by chain.
struct PosteriorDraws {
  std::vector<ParamState> draws;
  std::vector<int> chain_ids;
  std::vector<double> log_post;  // log_posterior_unnorm of each draw
  Dims dims;
  double lambda = 1.0;
  double accept_rate = 0.0;
  double divergent_fraction = 0.0;
  bool divergence_warning = false;
  std::vector<double> step_sizes;  // one per chain
  std::uint64_t seed = 0;
  McmcConfig mcmc;
  ModelConfig model;

  std::size_t size() const { return draws.size(); }
  int num_chains() const;
};

/// Samples pi_lambda(phi, psi | corpus) with HMC. Chain c uses the RNG
/// stream derive_seed(mcmc.seed, c); chains run on up to `jobs` threads with
/// results independent of `jobs`.
PosteriorDraws sample_posterior(const Corpus& corpus, const ModelConfig& config, double lambda,
                                const McmcConfig& mcmc, int jobs = 1);

/// One sense permutation (new label -> old label) per time slice. The
/// likelihood and prior are invariant under permuting the senses of each time
/// slice independently, so draws are aligned slice by slice.
using SenseAlignment = std::vector<std::vector<int>>;

/// Alignment of `draw` to `pivot` minimizing, per time slice, the total
/// symmetric KL between their sense-word distributions.
SenseAlignment best_alignment(const ParamState& pivot, const ParamState& draw);

/// Applies one permutation to every time slice.
ParamState permute_senses(const ParamState& params, const std::vector<int>& perm);
ParamState permute_senses(const ParamState& params, const SenseAlignment& perms);

/// Aligns every draw to the highest log-posterior draw (first on ties).
PosteriorDraws relabel_draws(const PosteriorDraws& draws);

/// Elementwise mean of softmax images across draws.
ProbParams posterior_mean_probs(const PosteriorDraws& draws);

/// Time-marginal sense-word distributions: row k is the mean over t of psi_tilde[k, t].
RowMatrixXd time_marginal_senses(const ProbParams& probs);

}  // namespace gbsel
