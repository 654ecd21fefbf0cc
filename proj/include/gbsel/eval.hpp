#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "gbsel/model.hpp"
#include "gbsel/sampler.hpp"

namespace gbsel {

/// Mean over draws of each snippet's sense posterior, D x K.
RowMatrixXd predictive_probs(const Corpus& corpus, const PosteriorDraws& draws);

struct SenseMapping {
  std::vector<int> mapping;  // model sense -> true sense, surjective
  RowMatrixXd mapped_probs;  // D x K'
  double brier = 0.0;
};

/// Sums the columns of `probs` per true sense under `mapping`.
RowMatrixXd apply_mapping(const RowMatrixXd& probs, const std::vector<int>& mapping,
                          int num_true_senses);

/// Exhaustive search over all surjections {0..K-1} -> {0..K'-1} for the one
/// minimizing the Brier score. The first minimizer in lexicographic order wins.
SenseMapping map_senses(const RowMatrixXd& probs, const std::vector<int>& labels,
                        int num_true_senses);

/// Multi-category Brier score in [0, 2].
double brier_score(const RowMatrixXd& mapped_probs, const std::vector<int>& labels);

struct CollapseCheck {
  bool collapsed = false;
  RowMatrixXd divergence;  // K x K symmetric KL of time-marginal sense-word distributions
};

/// Collapsed iff every pair of senses has symmetric KL below `threshold`.
/// K = 1 is never collapsed.
CollapseCheck detect_collapse(const ProbParams& mean, double threshold = 0.05);

/// Per sense, the n most probable word ids of the time-marginal distribution,
/// descending, ties to the smaller id.
std::vector<std::vector<int>> top_words(const ProbParams& mean, int n);

/// Shortest interval spanning ceil(mass * n) order statistics; ties go to the
/// lowest window.
std::pair<double, double> hpd_interval(std::vector<double> samples, double mass);

struct EvalReport {
  std::optional<double> brier;  // absent when collapsed
  std::vector<std::vector<int>> mapping;  // per time slice: model sense -> true sense
  RowMatrixXd per_snippet_probs;  // D x K'
  bool collapsed = false;
  RowMatrixXd pairwise_divergence;
  double lambda = 1.0;
  std::vector<std::vector<int>> top_words;
  std::vector<std::vector<double>> top_word_probs;
  // 95% HPD interval of each sense's prevalence, per (genre, time) row.
  std::vector<std::vector<std::pair<double, double>>> prevalence_hpd;
  std::vector<std::vector<double>> prevalence_mean;
};

struct EvalOptions {
  double collapse_threshold = 0.05;
  int num_top_words = 10;
  double hpd_mass = 0.95;
};

/// Full scoring of relabeled draws against the corpus labels.
EvalReport evaluate(const Corpus& corpus, const PosteriorDraws& draws, const EvalOptions& options = {});

}  // namespace gbsel
