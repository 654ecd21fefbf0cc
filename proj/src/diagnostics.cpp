#include "gbsel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gbsel/rng.hpp"

namespace gbsel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kProjectionSeed = 0x9d2c5680a1f3e7b1ULL;

double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw std::invalid_argument("no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("chains must have equal length");
  if (n < 4) throw std::invalid_argument("at least 4 draws per chain are required");
  const std::size_t half = n / 2;
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Autocovariance at lags 0..n-1 (biased, divides by n).
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double m = mean(x);
  std::vector<double> acov(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
    acov[lag] = s / static_cast<double>(n);
  }
  return acov;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  const auto split = split_chains(chains);
  const double n = static_cast<double>(split.front().size());
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return kNaN;
  const double b = n * variance(means);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const auto split = split_chains(chains);
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();
  std::vector<std::vector<double>> acov;
  std::vector<double> means, vars;
  for (const auto& c : split) {
    acov.push_back(autocovariance(c));
    means.push_back(mean(c));
    vars.push_back(acov.back()[0] * static_cast<double>(n) / static_cast<double>(n - 1));
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return kNaN;
  const double nd = static_cast<double>(n);
  const double b_over_n = m > 1 ? variance(means) : 0.0;
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;

  auto rho = [&](std::size_t lag) {
    double acov_mean = 0.0;
    for (const auto& a : acov) acov_mean += a[lag];
    acov_mean /= static_cast<double>(m);
    return 1.0 - (w - acov_mean) / var_plus;
  };

  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double tau_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau_sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * tau_sum, 1.0 / std::log10(static_cast<double>(m * n)));
  return static_cast<double>(m * n) / tau;
}

ConvergenceSummary convergence_summary(const PosteriorDraws& draws) {
  const int num_chains = draws.num_chains();
  if (draws.size() < 4) throw std::invalid_argument("convergence_summary: at least 4 draws required");
  std::vector<std::vector<double>> lp(static_cast<std::size_t>(num_chains));
  std::vector<std::vector<double>> proj(static_cast<std::size_t>(num_chains));

  Rng rng(kProjectionSeed);
  Eigen::VectorXd direction(draws.dims.flat_size());
  for (Eigen::Index i = 0; i < direction.size(); ++i) direction(i) = rng.normal();
  direction.normalize();

  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto c = static_cast<std::size_t>(draws.chain_ids[i]);
    if (!draws.log_post.empty()) lp[c].push_back(draws.log_post[i]);
    proj[c].push_back(draws.draws[i].flatten().dot(direction));
  }

  ConvergenceSummary out;
  auto monitor = [&](const std::string& name, const std::vector<std::vector<double>>& traces) {
    MonitoredScalar s{name, effective_sample_size(traces), split_rhat(traces), false};
    s.degenerate = std::isnan(s.ess) || std::isnan(s.rhat);
    // Sampling noise can put the estimate slightly below 1; it is reported as 1.
    if (!s.degenerate) s.rhat = std::max(s.rhat, 1.0);
    out.scalars.push_back(s);
  };
  if (!draws.log_post.empty()) monitor("log_posterior", lp);
  monitor("random_projection", proj);
  return out;
}

}  // namespace gbsel
