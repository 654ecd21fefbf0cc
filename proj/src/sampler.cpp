#include "gbsel/sampler.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "gbsel/errors.hpp"
#include "gbsel/hmc.hpp"
#include "gbsel/parallel.hpp"
#include "gbsel/rng.hpp"

namespace gbsel {

void McmcConfig::validate() const {
  if (num_draws < 1) throw ConfigError("mcmc.num_draws must be >= 1");
  if (num_warmup < 0) throw ConfigError("mcmc.num_warmup must be >= 0");
  if (num_chains < 1) throw ConfigError("mcmc.num_chains must be >= 1");
  if (leapfrog_min < 1 || leapfrog_max < leapfrog_min)
    throw ConfigError("mcmc.leapfrog_min/leapfrog_max must satisfy 1 <= min <= max");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ConfigError("mcmc.target_accept must lie in (0, 1)");
  if (!(init_sd >= 0.0)) throw ConfigError("mcmc.init_sd must be >= 0");
  if (!(max_divergent_fraction >= 0.0 && max_divergent_fraction <= 1.0))
    throw ConfigError("mcmc.max_divergent_fraction must lie in [0, 1]");
}

int PosteriorDraws::num_chains() const {
  if (chain_ids.empty()) return 0;
  return *std::max_element(chain_ids.begin(), chain_ids.end()) + 1;
}

PosteriorDraws sample_posterior(const Corpus& corpus, const ModelConfig& config, double lambda,
                                const McmcConfig& mcmc, int jobs) {
  check_lambda(lambda);
  config.validate();
  mcmc.validate();
  if (corpus.size() == 0) throw std::invalid_argument("sample_posterior: empty corpus");
  const Dims dims = Dims::of(corpus, config);

  hmc::ChainSettings settings;
  settings.num_warmup = mcmc.num_warmup;
  settings.num_draws = mcmc.num_draws;
  settings.leapfrog_min = mcmc.leapfrog_min;
  settings.leapfrog_max = mcmc.leapfrog_max;
  settings.target_accept = mcmc.target_accept;

  std::vector<hmc::ChainOutput> chains(static_cast<std::size_t>(mcmc.num_chains));
  parallel_for(mcmc.num_chains, jobs, [&](int c) {
    Rng rng = Rng::stream(mcmc.seed, static_cast<std::uint64_t>(c));
    Eigen::VectorXd q0(dims.flat_size());
    for (Eigen::Index i = 0; i < q0.size(); ++i) q0(i) = rng.normal(0.0, mcmc.init_sd);
    ParamState grad;
    auto target = [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
      const ParamState params = ParamState::unflatten(dims, q);
      const double lp = log_posterior_and_grad(corpus, params, lambda, config, grad);
      g = grad.flatten();
      return lp;
    };
    chains[static_cast<std::size_t>(c)] = hmc::run_chain(target, q0, settings, rng);
  });

  PosteriorDraws out;
  out.dims = dims;
  out.lambda = lambda;
  out.seed = mcmc.seed;
  out.mcmc = mcmc;
  out.model = config;
  double accept = 0.0;
  int divergences = 0;
  for (int c = 0; c < mcmc.num_chains; ++c) {
    const auto& chain = chains[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < chain.draws.size(); ++i) {
      out.draws.push_back(ParamState::unflatten(dims, chain.draws[i]));
      out.chain_ids.push_back(c);
      out.log_post.push_back(chain.log_density[i]);
    }
    accept += chain.accept_rate;
    divergences += chain.divergences;
    out.step_sizes.push_back(chain.step_size);
  }
  out.accept_rate = accept / mcmc.num_chains;
  out.divergent_fraction = static_cast<double>(divergences) / static_cast<double>(out.size());
  out.divergence_warning = out.divergent_fraction > mcmc.max_divergent_fraction;
  return out;
}

RowMatrixXd time_marginal_senses(const ProbParams& probs) {
  const Dims& dims = probs.dims;
  RowMatrixXd out = RowMatrixXd::Zero(dims.senses, dims.vocab);
  for (int k = 0; k < dims.senses; ++k) {
    for (int t = 0; t < dims.times; ++t) out.row(k) += probs.psi_tilde.row(dims.psi_index(k, t));
    out.row(k) /= static_cast<double>(dims.times);
  }
  return out;
}

namespace {

// Permutation (new label -> old label) minimizing the total symmetric KL
// between the rows of `a` and the permuted rows of `b`.
std::vector<int> align_rows(const RowMatrixXd& a, const RowMatrixXd& b) {
  const int K = static_cast<int>(a.rows());
  RowMatrixXd cost(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) cost(i, j) = symmetric_kl(a.row(i), b.row(j));

  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  if (K <= 6) {
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (int i = 0; i < K; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  // Greedy: repeatedly take the cheapest remaining (pivot, draw) pair.
  std::vector<bool> used_i(static_cast<std::size_t>(K)), used_j(static_cast<std::size_t>(K));
  for (int step = 0; step < K; ++step) {
    int bi = -1, bj = -1;
    double bc = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i) {
      if (used_i[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < K; ++j) {
        if (used_j[static_cast<std::size_t>(j)]) continue;
        if (bi < 0 || cost(i, j) < bc) {
          bc = cost(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    perm[static_cast<std::size_t>(bi)] = bj;
    used_i[static_cast<std::size_t>(bi)] = used_j[static_cast<std::size_t>(bj)] = true;
  }
  return perm;
}

RowMatrixXd slice(const ProbParams& probs, int t) {
  const Dims& dims = probs.dims;
  RowMatrixXd out(dims.senses, dims.vocab);
  for (int k = 0; k < dims.senses; ++k) out.row(k) = probs.psi_tilde.row(dims.psi_index(k, t));
  return out;
}

}  // namespace

SenseAlignment best_alignment(const ParamState& pivot, const ParamState& draw) {
  const ProbParams a = to_probs(pivot);
  const ProbParams b = to_probs(draw);
  SenseAlignment out;
  for (int t = 0; t < pivot.dims.times; ++t) out.push_back(align_rows(slice(a, t), slice(b, t)));
  return out;
}

ParamState permute_senses(const ParamState& params, const std::vector<int>& perm) {
  return permute_senses(params, SenseAlignment(static_cast<std::size_t>(params.dims.times), perm));
}

ParamState permute_senses(const ParamState& params, const SenseAlignment& perms) {
  const Dims& dims = params.dims;
  ParamState out = params;
  for (int t = 0; t < dims.times; ++t) {
    const auto& perm = perms[static_cast<std::size_t>(t)];
    for (int k = 0; k < dims.senses; ++k) {
      const int from = perm[static_cast<std::size_t>(k)];
      for (int g = 0; g < dims.genres; ++g)
        out.phi(dims.phi_index(g, t), k) = params.phi(dims.phi_index(g, t), from);
      out.psi.row(dims.psi_index(k, t)) = params.psi.row(dims.psi_index(from, t));
    }
  }
  return out;
}

PosteriorDraws relabel_draws(const PosteriorDraws& draws) {
  PosteriorDraws out = draws;
  if (draws.size() < 2 || draws.dims.senses < 2) return out;
  std::size_t pivot = 0;
  if (draws.log_post.size() == draws.size()) {
    for (std::size_t i = 1; i < draws.size(); ++i)
      if (draws.log_post[i] > draws.log_post[pivot]) pivot = i;
  }
  // The pivot's own slices are first matched to its first slice, so a sense
  // keeps one label across time when the slices allow it.
  SenseAlignment across_time;
  const ParamState& raw = draws.draws[pivot];
  const ProbParams raw_probs = to_probs(raw);
  for (int t = 0; t < raw.dims.times; ++t)
    across_time.push_back(align_rows(slice(raw_probs, 0), slice(raw_probs, t)));
  const ParamState reference = permute_senses(raw, across_time);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const SenseAlignment perms = best_alignment(reference, draws.draws[i]);
    const bool identity = std::all_of(perms.begin(), perms.end(), [](const std::vector<int>& p) {
      return std::is_sorted(p.begin(), p.end());
    });
    if (!identity) out.draws[i] = permute_senses(draws.draws[i], perms);
  }
  return out;
}

ProbParams posterior_mean_probs(const PosteriorDraws& draws) {
  if (draws.size() == 0) throw std::invalid_argument("posterior_mean_probs: no draws");
  ProbParams mean = to_probs(draws.draws.front());
  for (std::size_t i = 1; i < draws.size(); ++i) {
    const ProbParams p = to_probs(draws.draws[i]);
    mean.phi_tilde += p.phi_tilde;
    mean.psi_tilde += p.psi_tilde;
  }
  const double n = static_cast<double>(draws.size());
  mean.phi_tilde /= n;
  mean.psi_tilde /= n;
  return mean;
}

}  // namespace gbsel
