#include "gbsel/ppc.hpp"

#include <stdexcept>

#include "gbsel/parallel.hpp"

namespace gbsel {

Corpus replicate_dataset(const Corpus& corpus, const ParamState& draw, Rng& rng) {
  return replicate_dataset(corpus, to_probs(draw), rng);
}

Corpus replicate_dataset(const Corpus& corpus, const ProbParams& probs, Rng& rng) {
  const Dims& dims = probs.dims;
  check_shapes(corpus, dims);
  const RowMatrixXd responsibilities = sense_posteriors(corpus, probs);

  RowMatrixXd cumulative(dims.psi_rows(), dims.vocab);
  for (Eigen::Index r = 0; r < cumulative.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index v = 0; v < cumulative.cols(); ++v) {
      acc += probs.psi_tilde(r, v);
      cumulative(r, v) = acc;
    }
  }

  Corpus rep = corpus;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    Snippet& s = rep.snippets[d];
    const auto row = responsibilities.row(static_cast<Eigen::Index>(d));
    const int z = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    const auto cdf = cumulative.row(dims.psi_index(z, s.time));
    for (int& w : s.words)
      w = rng.from_cumulative(std::span<const double>(cdf.data(), static_cast<std::size_t>(cdf.size())));
  }
  return rep;
}

double diagnostic(const Corpus& corpus, const ParamState& params) {
  return log_likelihood(corpus, params);
}

double diagnostic(const Corpus& corpus, const ProbParams& probs) {
  return log_likelihood(corpus, probs);
}

double ppc_pvalue(std::span<const double> ref, double observed) {
  if (ref.empty()) throw std::invalid_argument("ppc_pvalue: empty reference sample");
  std::size_t below = 0;
  for (double r : ref)
    if (r < observed) ++below;
  return static_cast<double>(below) / static_cast<double>(ref.size());
}

void compute_pvalues(PpcResult& r) {
  const std::size_t n = r.ref_diagnostics.size();
  if (n == 0 || r.observed_at_draws.size() != n)
    throw std::invalid_argument("compute_pvalues: need equal, nonzero numbers of draws");
  r.p_mean = ppc_pvalue(r.ref_diagnostics, r.observed_at_mean);
  std::size_t paired = 0;
  double obs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.ref_diagnostics[i] < r.observed_at_draws[i]) ++paired;
    obs_sum += r.observed_at_draws[i];
  }
  r.p_paired = static_cast<double>(paired) / static_cast<double>(n);
  r.p_avg = ppc_pvalue(r.ref_diagnostics, obs_sum / static_cast<double>(n));
}

PpcResult run_ppc(const Corpus& corpus, const PosteriorDraws& draws, std::uint64_t seed, int jobs) {
  const std::size_t n = draws.size();
  if (n == 0) throw std::invalid_argument("run_ppc: no posterior draws");
  PpcResult out;
  out.lambda = draws.lambda;
  out.ref_diagnostics.resize(n);
  out.observed_at_draws.resize(n);

  auto work = [&](std::size_t i) {
    const ProbParams probs = to_probs(draws.draws[i]);
    Rng rng = Rng::stream(seed, i);
    const Corpus rep = replicate_dataset(corpus, probs, rng);
    out.ref_diagnostics[i] = diagnostic(rep, probs);
    out.observed_at_draws[i] = diagnostic(corpus, probs);
  };
  parallel_for(static_cast<int>(n), jobs, [&](int i) { work(static_cast<std::size_t>(i)); });

  out.observed_at_mean = diagnostic(corpus, posterior_mean_probs(draws));
  compute_pvalues(out);
  return out;
}

}  // namespace gbsel
