#pragma once

// Latent-sense multinomial mixture. Each snippet d has covariates (genre g,
// time t) and a latent sense z_d drawn from phi_tilde[g,t]; its words are
// drawn i.i.d. from psi_tilde[z_d, t]. Senses are marginalized analytically.
//
// All indices are 0-based in memory; the file formats in serialize.hpp are
// 1-based.

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gbsel/math.hpp"

namespace gbsel {

struct Snippet {
  std::vector<int> words;  // may be empty
  int genre = 0;
  int time = 0;

  bool operator==(const Snippet&) const = default;
};

struct Corpus {
  std::vector<Snippet> snippets;
  int vocab_size = 1;
  int num_genres = 1;
  int num_times = 1;
  std::optional<std::vector<int>> labels;  // true senses, one per snippet
  std::optional<int> num_true_senses;

  std::size_t size() const { return snippets.size(); }
  bool has_labels() const { return labels.has_value() && num_true_senses.has_value(); }

  /// Throws DataError naming the first offending snippet and field.
  void validate() const;

  bool operator==(const Corpus&) const = default;
};

struct ModelConfig {
  int num_senses = 2;
  double prior_sd_phi = 1.0;
  double prior_sd_psi = 1.0;

  void validate() const;
};

/// Array extents shared by ParamState and ProbParams.
struct Dims {
  int genres = 1;
  int times = 1;
  int senses = 1;
  int vocab = 1;

  static Dims of(const Corpus& corpus, const ModelConfig& config) {
    return {corpus.num_genres, corpus.num_times, config.num_senses, corpus.vocab_size};
  }
  int phi_rows() const { return genres * times; }
  int psi_rows() const { return senses * times; }
  int phi_index(int genre, int time) const { return genre * times + time; }
  int psi_index(int sense, int time) const { return sense * times + time; }
  Eigen::Index flat_size() const {
    return static_cast<Eigen::Index>(phi_rows()) * senses +
           static_cast<Eigen::Index>(psi_rows()) * vocab;
  }

  bool operator==(const Dims&) const = default;
};

/// Unconstrained logits. phi has one row per (genre, time) and one column per
/// sense; psi has one row per (sense, time) and one column per word.
struct ParamState {
  RowMatrixXd phi;
  RowMatrixXd psi;
  Dims dims;

  static ParamState zeros(const Dims& dims);

  /// Concatenation of phi then psi, each in row-major order.
  Eigen::VectorXd flatten() const;
  static ParamState unflatten(const Dims& dims, const Eigen::Ref<const Eigen::VectorXd>& flat);

  bool all_finite() const { return phi.allFinite() && psi.allFinite(); }
  bool operator==(const ParamState& other) const {
    return dims == other.dims && phi == other.phi && psi == other.psi;
  }
};

/// Softmax images of ParamState, or averages of such images.
struct ProbParams {
  RowMatrixXd phi_tilde;
  RowMatrixXd psi_tilde;
  Dims dims;
};

ProbParams to_probs(const ParamState& params);

/// Throws std::invalid_argument when the corpus and parameter extents differ.
void check_shapes(const Corpus& corpus, const Dims& dims);

double log_likelihood(const Corpus& corpus, const ParamState& params);
double log_likelihood(const Corpus& corpus, const ProbParams& probs);

double log_prior(const ParamState& params, const ModelConfig& config);

/// log prior + lambda * log likelihood. Requires 0 <= lambda <= 1.
double log_posterior_unnorm(const Corpus& corpus, const ParamState& params, double lambda,
                            const ModelConfig& config);

ParamState grad_log_posterior(const Corpus& corpus, const ParamState& params, double lambda,
                              const ModelConfig& config);

/// Tempered log posterior and its gradient in a single pass over the corpus.
/// `grad` is resized as needed.
double log_posterior_and_grad(const Corpus& corpus, const ParamState& params, double lambda,
                              const ModelConfig& config, ParamState& grad);

/// p(z = k | words, params) for one snippet.
Eigen::VectorXd sense_posterior(const Snippet& snippet, const ParamState& params);
Eigen::VectorXd sense_posterior(const Snippet& snippet, const ProbParams& probs);

/// Responsibilities of every snippet as a D x K matrix.
RowMatrixXd sense_posteriors(const Corpus& corpus, const ProbParams& probs);

void check_lambda(double lambda);

}  // namespace gbsel
