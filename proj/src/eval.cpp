#include "gbsel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gbsel/errors.hpp"

namespace gbsel {

RowMatrixXd predictive_probs(const Corpus& corpus, const PosteriorDraws& draws) {
  if (draws.size() == 0) throw std::invalid_argument("predictive_probs: no draws");
  RowMatrixXd acc = sense_posteriors(corpus, to_probs(draws.draws.front()));
  for (std::size_t i = 1; i < draws.size(); ++i)
    acc += sense_posteriors(corpus, to_probs(draws.draws[i]));
  acc /= static_cast<double>(draws.size());
  return acc;
}

RowMatrixXd apply_mapping(const RowMatrixXd& probs, const std::vector<int>& mapping,
                          int num_true_senses) {
  RowMatrixXd out = RowMatrixXd::Zero(probs.rows(), num_true_senses);
  for (Eigen::Index k = 0; k < probs.cols(); ++k)
    out.col(mapping[static_cast<std::size_t>(k)]) += probs.col(k);
  return out;
}

double brier_score(const RowMatrixXd& mapped_probs, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(mapped_probs.rows()) != labels.size())
    throw std::invalid_argument("brier_score: prediction and label counts differ");
  if (labels.empty()) throw std::invalid_argument("brier_score: no snippets");
  double total = 0.0;
  for (Eigen::Index d = 0; d < mapped_probs.rows(); ++d) {
    const int o = labels[static_cast<std::size_t>(d)];
    for (Eigen::Index k = 0; k < mapped_probs.cols(); ++k) {
      const double diff = mapped_probs(d, k) - (k == o ? 1.0 : 0.0);
      total += diff * diff;
    }
  }
  return total / static_cast<double>(mapped_probs.rows());
}

SenseMapping map_senses(const RowMatrixXd& probs, const std::vector<int>& labels,
                        int num_true_senses) {
  const int K = static_cast<int>(probs.cols());
  if (num_true_senses < 1) throw DataError("true labels are required for sense mapping");
  if (K < num_true_senses)
    throw std::invalid_argument("map_senses: no surjection from " + std::to_string(K) +
                                " model senses onto " + std::to_string(num_true_senses) +
                                " true senses");
  // Odometer over all functions, keeping surjective ones.
  std::vector<int> f(static_cast<std::size_t>(K), 0);
  SenseMapping best;
  best.brier = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<bool> hit(static_cast<std::size_t>(num_true_senses), false);
    for (int v : f) hit[static_cast<std::size_t>(v)] = true;
    if (std::all_of(hit.begin(), hit.end(), [](bool b) { return b; })) {
      RowMatrixXd mapped = apply_mapping(probs, f, num_true_senses);
      const double bs = brier_score(mapped, labels);
      if (bs < best.brier) best = {f, std::move(mapped), bs};
    }
    int pos = K - 1;
    while (pos >= 0 && f[static_cast<std::size_t>(pos)] == num_true_senses - 1)
      f[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
    ++f[static_cast<std::size_t>(pos)];
  }
  return best;
}

CollapseCheck detect_collapse(const ProbParams& mean, double threshold) {
  const int K = mean.dims.senses;
  const RowMatrixXd marginal = time_marginal_senses(mean);
  CollapseCheck out;
  out.divergence = RowMatrixXd::Zero(K, K);
  double max_div = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      const double d = symmetric_kl(marginal.row(i), marginal.row(j));
      out.divergence(i, j) = out.divergence(j, i) = d;
      max_div = std::max(max_div, d);
    }
  out.collapsed = K >= 2 && max_div < threshold;
  return out;
}

std::vector<std::vector<int>> top_words(const ProbParams& mean, int n) {
  if (n < 0 || n > mean.dims.vocab) throw std::invalid_argument("top_words: n must lie in [0, V]");
  const RowMatrixXd marginal = time_marginal_senses(mean);
  std::vector<std::vector<int>> out;
  for (int k = 0; k < mean.dims.senses; ++k) {
    std::vector<int> ids(static_cast<std::size_t>(mean.dims.vocab));
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + n, ids.end(), [&](int a, int b) {
      if (marginal(k, a) != marginal(k, b)) return marginal(k, a) > marginal(k, b);
      return a < b;
    });
    ids.resize(static_cast<std::size_t>(n));
    out.push_back(std::move(ids));
  }
  return out;
}

std::pair<double, double> hpd_interval(std::vector<double> samples, double mass) {
  if (samples.size() < 2) throw std::invalid_argument("hpd_interval: need at least 2 samples");
  if (!(mass > 0.0 && mass < 1.0)) throw std::invalid_argument("hpd_interval: mass must lie in (0, 1)");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("hpd_interval: non-finite sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const auto count = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  const std::size_t k = std::clamp<std::size_t>(count, 1, n);
  std::size_t best = 0;
  for (std::size_t i = 1; i + k <= n; ++i)
    if (samples[i + k - 1] - samples[i] < samples[best + k - 1] - samples[best]) best = i;
  return {samples[best], samples[best + k - 1]};
}

EvalReport evaluate(const Corpus& corpus, const PosteriorDraws& draws, const EvalOptions& options) {
  if (!corpus.has_labels())
    throw DataError("scoring requires true sense labels in the corpus (field 'label' and "
                    "'num_true_senses')");
  EvalReport out;
  out.lambda = draws.lambda;
  const ProbParams mean = posterior_mean_probs(draws);
  const CollapseCheck collapse = detect_collapse(mean, options.collapse_threshold);
  out.collapsed = collapse.collapsed;
  out.pairwise_divergence = collapse.divergence;

  // Senses are matched to true senses separately in each time slice.
  const RowMatrixXd probs = predictive_probs(corpus, draws);
  const int true_k = *corpus.num_true_senses;
  out.per_snippet_probs = RowMatrixXd::Zero(probs.rows(), true_k);
  double squared_error = 0.0;
  for (int t = 0; t < draws.dims.times; ++t) {
    std::vector<Eigen::Index> rows;
    std::vector<int> labels;
    for (std::size_t d = 0; d < corpus.size(); ++d)
      if (corpus.snippets[d].time == t) {
        rows.push_back(static_cast<Eigen::Index>(d));
        labels.push_back((*corpus.labels)[d]);
      }
    if (rows.empty()) {
      std::vector<int> identity(static_cast<std::size_t>(probs.cols()));
      for (std::size_t k = 0; k < identity.size(); ++k)
        identity[k] = std::min(static_cast<int>(k), true_k - 1);
      out.mapping.push_back(identity);
      continue;
    }
    const RowMatrixXd sub = probs(rows, Eigen::all);
    const SenseMapping m = map_senses(sub, labels, true_k);
    out.mapping.push_back(m.mapping);
    out.per_snippet_probs(rows, Eigen::all) = m.mapped_probs;
    squared_error += m.brier * static_cast<double>(rows.size());
  }
  if (!out.collapsed) out.brier = squared_error / static_cast<double>(corpus.size());

  const int n_top = std::min(options.num_top_words, mean.dims.vocab);
  out.top_words = top_words(mean, n_top);
  const RowMatrixXd marginal = time_marginal_senses(mean);
  for (int k = 0; k < mean.dims.senses; ++k) {
    std::vector<double> p;
    for (int w : out.top_words[static_cast<std::size_t>(k)]) p.push_back(marginal(k, w));
    out.top_word_probs.push_back(std::move(p));
  }

  if (draws.size() >= 2) {
    const Dims& dims = draws.dims;
    std::vector<ProbParams> probs_per_draw;
    probs_per_draw.reserve(draws.size());
    for (const auto& d : draws.draws) probs_per_draw.push_back(to_probs(d));
    for (int row = 0; row < dims.phi_rows(); ++row) {
      std::vector<std::pair<double, double>> intervals;
      std::vector<double> means;
      for (int k = 0; k < dims.senses; ++k) {
        std::vector<double> samples;
        samples.reserve(draws.size());
        for (const auto& p : probs_per_draw) samples.push_back(p.phi_tilde(row, k));
        intervals.push_back(hpd_interval(samples, options.hpd_mass));
        means.push_back(mean.phi_tilde(row, k));
      }
      out.prevalence_hpd.push_back(std::move(intervals));
      out.prevalence_mean.push_back(std::move(means));
    }
  }
  return out;
}

}  // namespace gbsel
