#include "gbsel/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gbsel/errors.hpp"

namespace gbsel {

namespace {

std::string snippet_tag(std::size_t d) { return "snippet " + std::to_string(d + 1); }

// Log-weights a_k = log phi_tilde[g,t][k] + sum_w log psi_tilde[k,t][w].
Eigen::VectorXd snippet_log_weights(const Snippet& s, const RowMatrixXd& log_phi,
                                    const RowMatrixXd& log_psi, const Dims& dims) {
  Eigen::VectorXd a = log_phi.row(dims.phi_index(s.genre, s.time)).transpose();
  for (int k = 0; k < dims.senses; ++k) {
    const auto row = log_psi.row(dims.psi_index(k, s.time));
    double acc = 0.0;
    for (int w : s.words) acc += row(w);
    a(k) += acc;
  }
  return a;
}

void check_snippet(const Snippet& s, const Dims& dims) {
  if (s.genre < 0 || s.genre >= dims.genres || s.time < 0 || s.time >= dims.times)
    throw std::invalid_argument("snippet covariates outside parameter extents");
  for (int w : s.words)
    if (w < 0 || w >= dims.vocab) throw std::invalid_argument("word id outside vocabulary");
}

Eigen::VectorXd posterior_from_weights(const Eigen::VectorXd& a) {
  Eigen::VectorXd r = (a.array() - log_sum_exp(a)).exp().matrix();
  r /= r.sum();
  return r;
}

}  // namespace

void Corpus::validate() const {
  if (vocab_size < 1) throw DataError("vocab_size must be >= 1");
  if (num_genres < 1) throw DataError("num_genres must be >= 1");
  if (num_times < 1) throw DataError("num_times must be >= 1");
  for (std::size_t d = 0; d < snippets.size(); ++d) {
    const Snippet& s = snippets[d];
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      if (s.words[i] < 0 || s.words[i] >= vocab_size)
        throw DataError(snippet_tag(d) + ": field 'words' position " + std::to_string(i + 1) +
                        " has word id " + std::to_string(s.words[i] + 1) + " outside 1.." +
                        std::to_string(vocab_size));
    }
    if (s.genre < 0 || s.genre >= num_genres)
      throw DataError(snippet_tag(d) + ": field 'genre' = " + std::to_string(s.genre + 1) +
                      " outside 1.." + std::to_string(num_genres));
    if (s.time < 0 || s.time >= num_times)
      throw DataError(snippet_tag(d) + ": field 'time' = " + std::to_string(s.time + 1) +
                      " outside 1.." + std::to_string(num_times));
  }
  if (labels.has_value() != num_true_senses.has_value())
    throw DataError("labels and num_true_senses must be given together");
  if (labels) {
    if (*num_true_senses < 1) throw DataError("num_true_senses must be >= 1");
    if (labels->size() != snippets.size())
      throw DataError("labels has " + std::to_string(labels->size()) + " entries for " +
                      std::to_string(snippets.size()) + " snippets");
    for (std::size_t d = 0; d < labels->size(); ++d) {
      int o = (*labels)[d];
      if (o < 0 || o >= *num_true_senses)
        throw DataError(snippet_tag(d) + ": field 'label' = " + std::to_string(o + 1) +
                        " outside 1.." + std::to_string(*num_true_senses));
    }
  }
}

void ModelConfig::validate() const {
  if (num_senses < 1) throw ConfigError("model.num_senses must be >= 1");
  if (!(prior_sd_phi > 0.0) || !std::isfinite(prior_sd_phi))
    throw ConfigError("model.prior_sd_phi must be positive");
  if (!(prior_sd_psi > 0.0) || !std::isfinite(prior_sd_psi))
    throw ConfigError("model.prior_sd_psi must be positive");
}

ParamState ParamState::zeros(const Dims& dims) {
  return {RowMatrixXd::Zero(dims.phi_rows(), dims.senses),
          RowMatrixXd::Zero(dims.psi_rows(), dims.vocab), dims};
}

Eigen::VectorXd ParamState::flatten() const {
  Eigen::VectorXd flat(phi.size() + psi.size());
  flat.head(phi.size()) = Eigen::Map<const Eigen::VectorXd>(phi.data(), phi.size());
  flat.tail(psi.size()) = Eigen::Map<const Eigen::VectorXd>(psi.data(), psi.size());
  return flat;
}

ParamState ParamState::unflatten(const Dims& dims, const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != dims.flat_size())
    throw std::invalid_argument("flat parameter vector has wrong length");
  ParamState out = zeros(dims);
  Eigen::Map<Eigen::VectorXd>(out.phi.data(), out.phi.size()) = flat.head(out.phi.size());
  Eigen::Map<Eigen::VectorXd>(out.psi.data(), out.psi.size()) = flat.tail(out.psi.size());
  return out;
}

ProbParams to_probs(const ParamState& params) {
  return {softmax_rows(params.phi), softmax_rows(params.psi), params.dims};
}

void check_shapes(const Corpus& corpus, const Dims& dims) {
  if (corpus.vocab_size != dims.vocab || corpus.num_genres != dims.genres ||
      corpus.num_times != dims.times)
    throw std::invalid_argument("corpus extents do not match parameter extents");
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("lambda must lie in [0, 1], got " + std::to_string(lambda));
}

double log_likelihood(const Corpus& corpus, const ParamState& params) {
  // Routed through the probability path so that logits and their softmax
  // image give bit-identical diagnostics.
  return log_likelihood(corpus, to_probs(params));
}

double log_likelihood(const Corpus& corpus, const ProbParams& probs) {
  check_shapes(corpus, probs.dims);
  const RowMatrixXd log_phi = probs.phi_tilde.array().log().matrix();
  const RowMatrixXd log_psi = probs.psi_tilde.array().log().matrix();
  double total = 0.0;
  for (const Snippet& s : corpus.snippets) {
    check_snippet(s, probs.dims);
    total += log_sum_exp(snippet_log_weights(s, log_phi, log_psi, probs.dims));
  }
  return total;
}

double log_prior(const ParamState& params, const ModelConfig& config) {
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
  auto block = [&](const RowMatrixXd& m, double sd) {
    return -0.5 * m.squaredNorm() / (sd * sd) -
           static_cast<double>(m.size()) * (std::log(sd) + log_norm);
  };
  return block(params.phi, config.prior_sd_phi) + block(params.psi, config.prior_sd_psi);
}

double log_posterior_unnorm(const Corpus& corpus, const ParamState& params, double lambda,
                            const ModelConfig& config) {
  check_lambda(lambda);
  const double prior = log_prior(params, config);
  if (lambda == 0.0) {
    check_shapes(corpus, params.dims);
    return prior;
  }
  return prior + lambda * log_likelihood(corpus, params);
}

double log_posterior_and_grad(const Corpus& corpus, const ParamState& params, double lambda,
                              const ModelConfig& config, ParamState& grad) {
  check_lambda(lambda);
  check_shapes(corpus, params.dims);
  const Dims& dims = params.dims;
  const double inv_var_phi = 1.0 / (config.prior_sd_phi * config.prior_sd_phi);
  const double inv_var_psi = 1.0 / (config.prior_sd_psi * config.prior_sd_psi);

  grad.dims = dims;
  grad.phi = -params.phi * inv_var_phi;
  grad.psi = -params.psi * inv_var_psi;
  const double prior = log_prior(params, config);
  if (lambda == 0.0) return prior;

  const ProbParams probs = to_probs(params);
  const RowMatrixXd log_phi = probs.phi_tilde.array().log().matrix();
  const RowMatrixXd log_psi = probs.psi_tilde.array().log().matrix();

  RowMatrixXd g_phi = RowMatrixXd::Zero(dims.phi_rows(), dims.senses);
  RowMatrixXd word_mass = RowMatrixXd::Zero(dims.psi_rows(), dims.vocab);
  Eigen::VectorXd token_mass = Eigen::VectorXd::Zero(dims.psi_rows());

  double ll = 0.0;
  for (const Snippet& s : corpus.snippets) {
    check_snippet(s, dims);
    const Eigen::VectorXd a = snippet_log_weights(s, log_phi, log_psi, dims);
    const double lse = log_sum_exp(a);
    ll += lse;
    const Eigen::VectorXd r = (a.array() - lse).exp().matrix();
    const int gt = dims.phi_index(s.genre, s.time);
    g_phi.row(gt) += r.transpose() - probs.phi_tilde.row(gt);
    for (int k = 0; k < dims.senses; ++k) {
      const int kt = dims.psi_index(k, s.time);
      for (int w : s.words) word_mass(kt, w) += r(k);
      token_mass(kt) += r(k) * static_cast<double>(s.words.size());
    }
  }
  // d/dpsi of sum_w log softmax(psi)_w = counts - n * softmax(psi)
  const RowMatrixXd g_psi = word_mass - token_mass.asDiagonal() * probs.psi_tilde;

  grad.phi += lambda * g_phi;
  grad.psi += lambda * g_psi;
  return prior + lambda * ll;
}

ParamState grad_log_posterior(const Corpus& corpus, const ParamState& params, double lambda,
                              const ModelConfig& config) {
  ParamState grad;
  log_posterior_and_grad(corpus, params, lambda, config, grad);
  return grad;
}

Eigen::VectorXd sense_posterior(const Snippet& snippet, const ParamState& params) {
  return sense_posterior(snippet, to_probs(params));
}

Eigen::VectorXd sense_posterior(const Snippet& snippet, const ProbParams& probs) {
  check_snippet(snippet, probs.dims);
  const Dims& dims = probs.dims;
  Eigen::VectorXd a = probs.phi_tilde.row(dims.phi_index(snippet.genre, snippet.time))
                          .transpose()
                          .array()
                          .log()
                          .matrix();
  for (int k = 0; k < dims.senses; ++k) {
    const auto row = probs.psi_tilde.row(dims.psi_index(k, snippet.time));
    double acc = 0.0;
    for (int w : snippet.words) acc += std::log(row(w));
    a(k) += acc;
  }
  return posterior_from_weights(a);
}

RowMatrixXd sense_posteriors(const Corpus& corpus, const ProbParams& probs) {
  check_shapes(corpus, probs.dims);
  const RowMatrixXd log_phi = probs.phi_tilde.array().log().matrix();
  const RowMatrixXd log_psi = probs.psi_tilde.array().log().matrix();
  RowMatrixXd out(static_cast<Eigen::Index>(corpus.size()), probs.dims.senses);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const Snippet& s = corpus.snippets[d];
    check_snippet(s, probs.dims);
    out.row(static_cast<Eigen::Index>(d)) =
        posterior_from_weights(snippet_log_weights(s, log_phi, log_psi, probs.dims)).transpose();
  }
  return out;
}

}  // namespace gbsel
