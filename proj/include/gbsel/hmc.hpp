#pragma once

// Hamiltonian Monte Carlo with a diagonal metric, jittered trajectory length
// and dual-averaging step-size adaptation. Generic over any log density
// callable as `double f(const Eigen::VectorXd& q, Eigen::VectorXd& grad)`.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "gbsel/errors.hpp"
#include "gbsel/rng.hpp"

namespace gbsel::hmc {

template <typename F>
concept LogDensity = requires(F f, const Eigen::VectorXd& q, Eigen::VectorXd& g) {
  { f(q, g) } -> std::convertible_to<double>;
};

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

/// Potential plus kinetic energy under the diagonal inverse metric.
inline double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * (z.p.array().square() * inv_metric.array()).sum();
}

/// `steps` leapfrog steps of size `eps`. Stops early if the density becomes
/// non-finite; the returned point then carries a non-finite log density.
template <LogDensity F>
PhasePoint leapfrog(F& target, PhasePoint z, double eps, int steps,
                    const Eigen::VectorXd& inv_metric) {
  for (int s = 0; s < steps; ++s) {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric.cwiseProduct(z.p);
    z.log_density = target(z.q, z.grad);
    if (!std::isfinite(z.log_density) || !z.grad.allFinite()) {
      z.log_density = -std::numeric_limits<double>::infinity();
      return z;
    }
    z.p += 0.5 * eps * z.grad;
  }
  return z;
}

/// Metropolis decision on the energy change H(proposal) - H(current); a zero
/// change is accepted for every u in [0, 1).
inline bool metropolis_accept(double energy_change, double u) {
  return std::log(u) < -energy_change;
}

/// Nesterov dual averaging of log step size (Hoffman & Gelman 2014).
class DualAveraging {
 public:
  DualAveraging(double target_accept, double initial_step) : delta_(target_accept) {
    restart(initial_step);
  }

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    h_bar_ = 0.0;
    log_step_bar_ = 0.0;
    counter_ = 0;
  }

  /// Feeds one acceptance statistic, returns the next step size.
  double update(double accept_stat) {
    ++counter_;
    const double m = static_cast<double>(counter_);
    const double w = 1.0 / (m + t0_);
    h_bar_ = (1.0 - w) * h_bar_ + w * (delta_ - accept_stat);
    const double log_step = mu_ - std::sqrt(m) / gamma_ * h_bar_;
    const double eta = std::pow(m, -kappa_);
    log_step_bar_ = eta * log_step + (1.0 - eta) * log_step_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_step_bar_); }

 private:
  double delta_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_step_bar_ = 0.0;
  long counter_ = 0;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

/// Warmup schedule with an initial fast buffer, doubling slow windows that
/// estimate the diagonal metric, and a terminal fast buffer.
class WarmupWindows {
 public:
  explicit WarmupWindows(int num_warmup) : num_warmup_(num_warmup) {
    if (num_warmup < 20) {
      init_buffer_ = num_warmup;
      term_buffer_ = 0;
      window_ = 0;
      next_end_ = -1;
      return;
    }
    if (num_warmup < init_buffer_ + term_buffer_ + window_) {
      init_buffer_ = static_cast<int>(0.15 * num_warmup);
      term_buffer_ = static_cast<int>(0.1 * num_warmup);
      window_ = num_warmup - init_buffer_ - term_buffer_;
    }
    next_end_ = init_buffer_ + window_ - 1;
    last_slow_ = num_warmup_ - term_buffer_ - 1;
    if (next_end_ + 2 * window_ > last_slow_) next_end_ = last_slow_;
  }

  bool in_slow_window(int iter) const {
    return next_end_ >= 0 && iter >= init_buffer_ && iter <= last_slow_;
  }

  /// True at the final iteration of a slow window; advances the schedule.
  bool window_ends(int iter) {
    if (next_end_ < 0 || iter != next_end_) return false;
    if (next_end_ == last_slow_) {
      next_end_ = -1;
      return true;
    }
    window_ *= 2;
    next_end_ = iter + window_;
    if (next_end_ + 2 * window_ > last_slow_) next_end_ = last_slow_;
    return true;
  }

 private:
  int num_warmup_;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int window_ = 25;
  int next_end_ = -1;
  int last_slow_ = -1;
};

struct ChainSettings {
  int num_warmup = 1000;
  int num_draws = 1000;
  int leapfrog_min = 8;
  int leapfrog_max = 24;
  double target_accept = 0.8;
  double divergence_threshold = 1000.0;
};

struct ChainOutput {
  std::vector<Eigen::VectorXd> draws;
  std::vector<double> log_density;
  double accept_rate = 0.0;  // mean acceptance statistic after warmup
  int divergences = 0;       // post-warmup divergent transitions
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
};

namespace detail {

template <LogDensity F>
double find_reasonable_step(F& target, const PhasePoint& z0, const Eigen::VectorXd& inv_metric,
                            Rng& rng, double step) {
  PhasePoint z = z0;
  auto draw_momentum = [&] {
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = rng.normal() / std::sqrt(inv_metric(i));
  };
  draw_momentum();
  double h0 = hamiltonian(z, inv_metric);
  PhasePoint z1 = leapfrog(target, z, step, 1, inv_metric);
  double delta = h0 - hamiltonian(z1, inv_metric);
  if (!std::isfinite(delta)) delta = -std::numeric_limits<double>::infinity();
  const int direction = delta > std::log(0.8) ? 1 : -1;
  for (int it = 0; it < 100; ++it) {
    draw_momentum();
    h0 = hamiltonian(z, inv_metric);
    z1 = leapfrog(target, z, step, 1, inv_metric);
    delta = h0 - hamiltonian(z1, inv_metric);
    if (!std::isfinite(delta)) delta = -std::numeric_limits<double>::infinity();
    if (direction == 1 && !(delta > std::log(0.8))) break;
    if (direction == -1 && !(delta < std::log(0.8))) break;
    step = direction == 1 ? 2.0 * step : 0.5 * step;
    if (step > 1e7 || step < 1e-12) break;
  }
  return step;
}

}  // namespace detail

/// Runs one chain from `q0`. Throws NumericalError if the initial point has a
/// non-finite density or gradient.
template <LogDensity F>
ChainOutput run_chain(F& target, const Eigen::VectorXd& q0, const ChainSettings& cfg, Rng& rng) {
  const Eigen::Index n = q0.size();
  PhasePoint z{q0, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0.0};
  z.log_density = target(z.q, z.grad);
  if (!std::isfinite(z.log_density) || !z.grad.allFinite())
    throw NumericalError("non-finite log density or gradient at the initial point");

  Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(n);
  double step = detail::find_reasonable_step(target, z, inv_metric, rng, 1.0);
  DualAveraging adapt(cfg.target_accept, step);
  WarmupWindows windows(cfg.num_warmup);

  // Welford accumulators for the slow-window variance estimate.
  long window_count = 0;
  Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w_m2 = Eigen::VectorXd::Zero(n);

  ChainOutput out;
  out.draws.reserve(static_cast<std::size_t>(cfg.num_draws));
  out.log_density.reserve(static_cast<std::size_t>(cfg.num_draws));
  double accept_sum = 0.0;

  const int total = cfg.num_warmup + cfg.num_draws;
  for (int iter = 0; iter < total; ++iter) {
    const bool warmup = iter < cfg.num_warmup;
    for (Eigen::Index i = 0; i < n; ++i) z.p(i) = rng.normal() / std::sqrt(inv_metric(i));
    const int steps = rng.uniform_int(cfg.leapfrog_min, cfg.leapfrog_max);
    const double h0 = hamiltonian(z, inv_metric);
    PhasePoint proposal = leapfrog(target, z, step, steps, inv_metric);
    const double h1 = hamiltonian(proposal, inv_metric);
    const double energy_change = h1 - h0;

    const bool divergent = !std::isfinite(energy_change) || energy_change > cfg.divergence_threshold;
    const double accept_stat = divergent ? 0.0 : std::min(1.0, std::exp(-energy_change));
    const double u = rng.uniform();
    if (!divergent && metropolis_accept(energy_change, u)) z = std::move(proposal);

    if (warmup) {
      step = adapt.update(accept_stat);
      if (windows.in_slow_window(iter)) {
        ++window_count;
        const Eigen::VectorXd delta = z.q - w_mean;
        w_mean += delta / static_cast<double>(window_count);
        w_m2 += delta.cwiseProduct(z.q - w_mean);
      }
      if (windows.window_ends(iter)) {
        const double c = static_cast<double>(window_count);
        if (window_count > 2) {
          const Eigen::VectorXd var = w_m2 / (c - 1.0);
          inv_metric = (c / (c + 5.0)) * var.array() + 1e-3 * (5.0 / (c + 5.0));
        }
        window_count = 0;
        w_mean.setZero();
        w_m2.setZero();
        step = detail::find_reasonable_step(target, z, inv_metric, rng, step);
        adapt.restart(step);
      }
      if (iter == cfg.num_warmup - 1) step = adapt.final_step();
    } else {
      accept_sum += accept_stat;
      if (divergent) ++out.divergences;
      out.draws.push_back(z.q);
      out.log_density.push_back(z.log_density);
    }
  }
  out.accept_rate = cfg.num_draws > 0 ? accept_sum / cfg.num_draws : 0.0;
  out.step_size = step;
  out.inv_metric = inv_metric;
  return out;
}

}  // namespace gbsel::hmc
