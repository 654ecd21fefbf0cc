#include "gbsel/selector.hpp"

#include <cmath>
#include <stdexcept>

#include "gbsel/errors.hpp"
#include "gbsel/parallel.hpp"
#include "gbsel/rng.hpp"
#include "gbsel/serialize.hpp"

namespace gbsel {

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int i = 10; i >= 1; --i) grid.push_back(i / 10.0);
  return grid;
}

void SelectorConfig::validate() const {
  if (grid.empty()) throw ConfigError("selector.grid must be nonempty");
  if (grid.front() != 1.0) throw ConfigError("selector.grid must start at 1.0");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] <= 1.0)) throw ConfigError("selector.grid values must lie in (0, 1]");
    if (i > 0 && !(grid[i] < grid[i - 1])) throw ConfigError("selector.grid must be strictly decreasing");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("selector.alpha must lie in (0, 1)");
  mcmc.validate();
}

std::uint64_t fit_seed(std::uint64_t base, std::size_t index) { return derive_seed(base, 2 * index); }
std::uint64_t ppc_seed(std::uint64_t base, std::size_t index) { return derive_seed(base, 2 * index + 1); }

std::optional<double> choose(const std::map<double, double>& pvalues, double alpha) {
  std::optional<double> best;
  double best_p = 0.0;
  // Ascending lambda, so a strict comparison keeps the smaller lambda on ties.
  for (const auto& [lambda, p] : pvalues) {
    if (!(p > alpha)) continue;
    if (!best || p < best_p) {
      best = lambda;
      best_p = p;
    }
  }
  return best;
}

namespace {

std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", lambda);
  return buf;
}

LambdaRecord fit_one(const Corpus& corpus, const ModelConfig& model, const SelectorConfig& sel,
                     std::size_t index, const std::optional<std::filesystem::path>& out_dir,
                     int inner_jobs) {
  LambdaRecord rec;
  rec.lambda = sel.grid[index];
  try {
    McmcConfig mcmc = sel.mcmc;
    mcmc.seed = fit_seed(sel.mcmc.seed, index);
    const PosteriorDraws draws =
        relabel_draws(sample_posterior(corpus, model, rec.lambda, mcmc, inner_jobs));
    const PpcResult ppc = run_ppc(corpus, draws, ppc_seed(sel.mcmc.seed, index), inner_jobs);
    rec.p_mean = ppc.p_mean;
    rec.p_paired = ppc.p_paired;
    rec.p_avg = ppc.p_avg;
    rec.accept_rate = draws.accept_rate;
    rec.divergent_fraction = draws.divergent_fraction;
    const ProbParams mean = posterior_mean_probs(draws);
    rec.collapsed = detect_collapse(mean, sel.eval.collapse_threshold).collapsed;
    if (corpus.has_labels()) rec.brier = evaluate(corpus, draws, sel.eval).brier;
    if (out_dir) {
      const std::string tag = lambda_tag(rec.lambda);
      rec.draws_file = "draws_lambda_" + tag + ".jsonl";
      rec.ppc_file = "ppc_lambda_" + tag + ".json";
      save_draws(draws, *out_dir / rec.draws_file);
      save_ppc_json(ppc, *out_dir / rec.ppc_file);
      save_ppc_csv(ppc, *out_dir / ("ppc_lambda_" + tag + ".csv"));
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

LambdaReport select_lambda(const Corpus& corpus, const ModelConfig& model, const SelectorConfig& sel,
                           const std::optional<std::filesystem::path>& out_dir) {
  sel.validate();
  model.validate();
  corpus.validate();
  if (out_dir) std::filesystem::create_directories(*out_dir);

  const std::size_t n = sel.grid.size();
  LambdaReport report;
  report.alpha = sel.alpha;
  report.records.resize(n);

  if (sel.early_stop) {
    // Sequential: later grid points depend on earlier p-values.
    bool stop = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (stop) {
        report.records[i].lambda = sel.grid[i];
        report.records[i].skipped = true;
        continue;
      }
      report.records[i] = fit_one(corpus, model, sel, i, out_dir, sel.jobs);
      if (report.records[i].ok && report.records[i].p_mean == 0.0) stop = true;
    }
  } else {
    parallel_for(static_cast<int>(n), sel.jobs, [&](int i) {
      report.records[static_cast<std::size_t>(i)] =
          fit_one(corpus, model, sel, static_cast<std::size_t>(i), out_dir, 1);
    });
  }

  std::map<double, double> pvalues;
  for (const auto& r : report.records)
    if (r.ok) pvalues[r.lambda] = r.p_mean;
  report.selected = choose(pvalues, sel.alpha);
  return report;
}

}  // namespace gbsel
