#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../common/oracles.hpp"
#include "gbsel/errors.hpp"
#include "gbsel/sampler.hpp"

using namespace gbsel;

namespace {

ParamState random_params(const Dims& dims, std::mt19937_64& gen, double sd = 1.5) {
  std::normal_distribution<double> n(0.0, sd);
  ParamState p = ParamState::zeros(dims);
  for (Eigen::Index i = 0; i < p.phi.size(); ++i) p.phi.data()[i] = n(gen);
  for (Eigen::Index i = 0; i < p.psi.size(); ++i) p.psi.data()[i] = n(gen);
  return p;
}

PosteriorDraws wrap(std::vector<ParamState> draws) {
  PosteriorDraws out;
  out.dims = draws.front().dims;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    out.chain_ids.push_back(0);
    out.log_post.push_back(-static_cast<double>(i));  // first draw is the pivot
  }
  out.draws = std::move(draws);
  return out;
}

Corpus small_corpus() {
  Corpus c;
  c.vocab_size = 3;
  c.snippets = {{{0, 0, 1}, 0, 0}, {{2, 2}, 0, 0}, {{1}, 0, 0}, {{0, 2, 2, 1}, 0, 0}};
  return c;
}

}  // namespace

TEST_CASE("mcmc config validation") {
  McmcConfig m;
  CHECK_NOTHROW(m.validate());
  m.num_draws = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.target_accept = 1.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.leapfrog_min = 10;
  m.leapfrog_max = 5;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("sample_posterior is deterministic and independent of jobs") {
  McmcConfig m;
  m.num_draws = 30;
  m.num_warmup = 40;
  m.num_chains = 3;
  m.seed = 99;
  const ModelConfig config{2, 1.0, 1.0};
  const PosteriorDraws a = sample_posterior(small_corpus(), config, 0.7, m, 1);
  const PosteriorDraws b = sample_posterior(small_corpus(), config, 0.7, m, 3);
  REQUIRE(a.size() == 90);
  CHECK(a.num_chains() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.draws[i] == b.draws[i]);
    CHECK(a.log_post[i] == b.log_post[i]);
    CHECK(a.draws[i].all_finite());
  }
  CHECK(a.accept_rate >= 0.0);
  CHECK(a.accept_rate <= 1.0);
  CHECK(a.lambda == 0.7);
  CHECK(a.log_post[5] ==
        doctest::Approx(log_posterior_unnorm(small_corpus(), a.draws[5], 0.7, config)));

  m.seed = 100;
  const PosteriorDraws c = sample_posterior(small_corpus(), config, 0.7, m, 1);
  CHECK_FALSE(c.draws[0] == a.draws[0]);
}

TEST_CASE("sample_posterior rejects bad input") {
  McmcConfig m;
  m.num_draws = 5;
  m.num_warmup = 5;
  CHECK_THROWS_AS(sample_posterior(small_corpus(), ModelConfig{}, 1.5, m), std::invalid_argument);
  Corpus empty;
  CHECK_THROWS_AS(sample_posterior(empty, ModelConfig{}, 1.0, m), std::invalid_argument);
}

TEST_CASE("prior-only sampling matches the prior") {
  McmcConfig m;
  m.num_draws = 1000;
  m.num_warmup = 300;
  m.num_chains = 2;
  m.seed = 8;
  const ModelConfig config{2, 1.0, 2.0};
  const PosteriorDraws d = sample_posterior(small_corpus(), config, 0.0, m);
  double mean = 0.0, sq = 0.0;
  for (const auto& p : d.draws) {
    mean += p.psi(1, 2);
    sq += p.psi(1, 2) * p.psi(1, 2);
  }
  const double n = static_cast<double>(d.size());
  mean /= n;
  const double sd = std::sqrt(sq / n - mean * mean);
  // Loose bounds: the acceptance suite checks this at MCSE precision.
  CHECK(std::abs(mean) < 0.3);
  CHECK(sd == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("relabel recovers a swapped draw") {
  std::mt19937_64 gen(1);
  const ParamState base = random_params(Dims{1, 1, 2, 5}, gen);
  const ParamState swapped = permute_senses(base, std::vector<int>{1, 0});
  CHECK_FALSE(swapped == base);
  CHECK(swapped.psi.row(0) == base.psi.row(1));
  const PosteriorDraws out = relabel_draws(wrap({base, swapped}));
  CHECK(out.draws[1] == base);
}

TEST_CASE("relabel leaves consistent draws unchanged") {
  std::mt19937_64 gen(2);
  const ParamState base = random_params(Dims{1, 1, 3, 6}, gen);
  ParamState near = base;
  near.psi.array() += 0.01;
  const PosteriorDraws in = wrap({base, near});
  const PosteriorDraws out = relabel_draws(in);
  CHECK(out.draws[0] == in.draws[0]);
  CHECK(out.draws[1] == in.draws[1]);
}

TEST_CASE("relabel undoes every permutation of three senses") {
  std::mt19937_64 gen(3);
  const ParamState base = random_params(Dims{2, 1, 3, 8}, gen, 2.0);
  std::vector<ParamState> draws{base};
  std::vector<int> perm{0, 1, 2};
  while (std::next_permutation(perm.begin(), perm.end())) draws.push_back(permute_senses(base, perm));
  const PosteriorDraws out = relabel_draws(wrap(draws));
  for (const auto& d : out.draws) CHECK(d == base);
}

TEST_CASE("relabel aligns each time slice separately") {
  std::mt19937_64 gen(4);
  const ParamState base = random_params(Dims{2, 3, 2, 6}, gen, 2.0);
  const ParamState mixed = permute_senses(base, SenseAlignment{{0, 1}, {1, 0}, {1, 0}});
  const PosteriorDraws out = relabel_draws(wrap({base, mixed}));
  CHECK(out.draws[1] == out.draws[0]);
}

TEST_CASE("relabel preserves the log posterior of every draw") {
  std::mt19937_64 gen(5);
  const Dims dims{1, 2, 3, 3};
  const ModelConfig config{3, 1.0, 1.0};
  std::vector<ParamState> draws;
  for (int i = 0; i < 6; ++i) draws.push_back(random_params(dims, gen));
  Corpus c;
  c.vocab_size = 3;
  c.num_times = 2;
  c.snippets = {{{0, 1}, 0, 0}, {{2}, 0, 1}, {{1, 1, 2}, 0, 1}};
  const PosteriorDraws in = wrap(draws);
  const PosteriorDraws out = relabel_draws(in);
  for (std::size_t i = 0; i < in.size(); ++i)
    CHECK(log_posterior_unnorm(c, out.draws[i], 1.0, config) ==
          doctest::Approx(log_posterior_unnorm(c, in.draws[i], 1.0, config)).epsilon(1e-12));
}

TEST_CASE("greedy alignment is used for many senses and still recovers a permutation") {
  std::mt19937_64 gen(6);
  const ParamState base = random_params(Dims{1, 1, 8, 20}, gen, 3.0);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  const PosteriorDraws out = relabel_draws(wrap({base, permute_senses(base, perm)}));
  CHECK(out.draws[1] == base);
}

TEST_CASE("posterior_mean_probs") {
  std::mt19937_64 gen(7);
  const Dims dims{1, 1, 2, 3};
  SUBCASE("single draw") {
    const ParamState p = random_params(dims, gen);
    const ProbParams m = posterior_mean_probs(wrap({p}));
    const ProbParams s = to_probs(p);
    CHECK(m.phi_tilde == s.phi_tilde);
    CHECK(m.psi_tilde == s.psi_tilde);
  }
  SUBCASE("limit logits average to one half") {
    ParamState a = ParamState::zeros(dims), b = ParamState::zeros(dims);
    a.phi << 40.0, -40.0;
    b.phi << -40.0, 40.0;
    const ProbParams m = posterior_mean_probs(wrap({a, b}));
    CHECK(m.phi_tilde(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.phi_tilde(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("matches brute-force averaging") {
    std::vector<ParamState> draws;
    for (int i = 0; i < 5; ++i) draws.push_back(random_params(Dims{2, 2, 2, 4}, gen));
    const ProbParams m = posterior_mean_probs(wrap(draws));
    for (Eigen::Index r = 0; r < m.psi_tilde.rows(); ++r) {
      std::vector<double> acc(4, 0.0);
      for (const auto& d : draws) {
        const auto row = oracle::row_softmax(d.psi, r);
        for (int w = 0; w < 4; ++w) acc[static_cast<std::size_t>(w)] += row[static_cast<std::size_t>(w)] / 5.0;
      }
      for (int w = 0; w < 4; ++w) CHECK(m.psi_tilde(r, w) == doctest::Approx(acc[static_cast<std::size_t>(w)]).epsilon(1e-13));
      CHECK(std::abs(m.psi_tilde.row(r).sum() - 1.0) < 1e-10);
    }
  }
  PosteriorDraws none;
  CHECK_THROWS_AS(posterior_mean_probs(none), std::invalid_argument);
}
