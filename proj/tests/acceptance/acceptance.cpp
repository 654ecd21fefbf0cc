// Acceptance suite. Run with a criterion number (1-9) to check one criterion,
// or without arguments to check all of them. Prints one PASS/FAIL line per
// criterion and exits nonzero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../common/oracles.hpp"
#include "gbsel/cli.hpp"
#include "gbsel/data.hpp"
#include "gbsel/diagnostics.hpp"
#include "gbsel/eval.hpp"
#include "gbsel/model.hpp"
#include "gbsel/ppc.hpp"
#include "gbsel/sampler.hpp"
#include "gbsel/selector.hpp"
#include "gbsel/serialize.hpp"

namespace fs = std::filesystem;
using namespace gbsel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// Small random instance with the given extents.
struct Instance {
  Corpus corpus;
  ParamState params;
};

Instance random_instance(std::mt19937_64& gen, int D, int K, int V, int G, int T, int max_len,
                         double scale) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::normal_distribution<double> normal(0.0, scale);
  Instance inst;
  inst.corpus.vocab_size = V;
  inst.corpus.num_genres = G;
  inst.corpus.num_times = T;
  for (int d = 0; d < D; ++d) {
    Snippet s;
    s.genre = std::uniform_int_distribution<int>(0, G - 1)(gen);
    s.time = std::uniform_int_distribution<int>(0, T - 1)(gen);
    const int n = len(gen);
    for (int i = 0; i < n; ++i) s.words.push_back(std::uniform_int_distribution<int>(0, V - 1)(gen));
    inst.corpus.snippets.push_back(s);
  }
  inst.params = ParamState::zeros(Dims{G, T, K, V});
  for (Eigen::Index i = 0; i < inst.params.phi.size(); ++i) inst.params.phi.data()[i] = normal(gen);
  for (Eigen::Index i = 0; i < inst.params.psi.size(); ++i) inst.params.psi.data()[i] = normal(gen);
  return inst;
}

// 1. Decision replay on reference p-value columns.
Outcome criterion1() {
  const std::vector<double> grid{1.0, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  struct Column {
    const char* name;
    std::vector<double> p;
    double expected;
  };
  const std::vector<Column> table{
      {"bank1", {.863, .428, .256, .114, .045, .009, 0}, 0.4},
      {"bank2", {.832, .393, .233, .119, .030, .009, 0}, 0.4},
      {"bank3", {.833, .412, .258, .126, .036, .007, .001}, 0.4},
      {"bank4", {.882, .459, .266, .138, .048, .009, 0}, 0.4},
      {"bank5", {.833, .374, .213, .105, .030, .007, 0}, 0.4},
      {"chair", {.656, .134, .037, .009, 0, 0, 0}, 0.6},
      {"apple", {.981, .899, .794, .652, .403, .208, .029}, 0.2},
      {"gay", {.776, .217, .111, .021, 0, 0, 0}, 0.5},
      {"mouse", {.968, .796, .692, .474, .245, .077, .004}, 0.3},
      {"bug", {.974, .567, .222, .066, 0, 0, 0}, 0.5},
  };
  std::string mismatches;
  for (const auto& col : table) {
    std::map<double, double> p;
    for (std::size_t i = 0; i < grid.size(); ++i) p[grid[i]] = col.p[i];
    const auto chosen = choose(p, 0.1);
    if (!chosen || *chosen != col.expected)
      mismatches += std::string(" ") + col.name + "->" + (chosen ? fmt(*chosen) : "none");
  }
  if (mismatches.empty()) return {true, "10/10 columns match"};
  return {false, "mismatch:" + mismatches};
}

// 2. Likelihood against brute-force enumeration.
Outcome criterion2() {
  std::mt19937_64 gen(20240501);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int D = 1 + rep % 3, K = 1 + (rep / 3) % 3, V = 1 + rep % 4;
    const int G = 1 + rep % 2, T = 1 + (rep / 2) % 2;
    const Instance inst = random_instance(gen, D, K, V, G, T, 5, 1.5);
    const double exact = oracle::brute_force_likelihood(inst.corpus, inst.params);
    const double ours = std::exp(log_likelihood(inst.corpus, inst.params));
    worst = std::max(worst, std::abs(ours - exact) / exact);
  }
  return {worst < 1e-10, "max relative error " + fmt(worst, 3)};
}

// 3. Analytic gradient against central differences.
Outcome criterion3() {
  std::mt19937_64 gen(77);
  double worst = 0.0, worst_abs = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int K = 1 + rep % 3;
    const Instance inst = random_instance(gen, 2 + rep % 4, K, 2 + rep % 4, 1 + rep % 2,
                                          1 + (rep / 2) % 2, 6, 1.0);
    const ModelConfig cfg{K, 1.0 + 0.5 * (rep % 2), 1.0};
    for (double lambda : {0.0, 0.3, 1.0}) {
      const Eigen::VectorXd g = grad_log_posterior(inst.corpus, inst.params, lambda, cfg).flatten();
      Eigen::VectorXd q = inst.params.flatten();
      const double h = 1e-5;
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        const double q0 = q(i);
        q(i) = q0 + h;
        const double up = log_posterior_unnorm(inst.corpus, ParamState::unflatten(inst.params.dims, q),
                                               lambda, cfg);
        q(i) = q0 - h;
        const double down = log_posterior_unnorm(
            inst.corpus, ParamState::unflatten(inst.params.dims, q), lambda, cfg);
        q(i) = q0;
        const double fd = (up - down) / (2.0 * h);
        // Differences below the absolute floor are finite-difference roundoff.
        const double abs_err = std::abs(fd - g(i));
        worst_abs = std::max(worst_abs, abs_err);
        if (abs_err > 1e-8) worst = std::max(worst, abs_err / std::max(std::abs(fd), std::abs(g(i))));
      }
    }
  }
  return {worst < 1e-5, "max relative error above the 1e-8 floor " + fmt(worst, 3) +
                            ", max absolute error " + fmt(worst_abs, 3)};
}

// 4. Sampler moments against quadrature.
Outcome criterion4() {
  Corpus corpus;
  corpus.vocab_size = 2;
  std::mt19937_64 gen(4);
  int counts[2] = {0, 0};
  for (int d = 0; d < 30; ++d) {
    Snippet s;
    const int n = 1 + static_cast<int>(gen() % 3);
    for (int i = 0; i < n; ++i) {
      const int w = std::bernoulli_distribution(0.3)(gen) ? 1 : 0;
      s.words.push_back(w);
      ++counts[w];
    }
    corpus.snippets.push_back(s);
  }
  const ModelConfig config{1, 1.0, 1.0};
  McmcConfig mcmc;
  mcmc.seed = 404;

  bool pass = true;
  std::string detail;
  for (double lambda : {1.0, 0.5, 0.0}) {
    const PosteriorDraws draws = sample_posterior(corpus, config, lambda, mcmc);
    const int chains = draws.num_chains();
    std::vector<std::vector<double>> c(static_cast<std::size_t>(chains));
    for (std::size_t i = 0; i < draws.size(); ++i)
      c[static_cast<std::size_t>(draws.chain_ids[i])].push_back(draws.draws[i].psi(0, 1) -
                                                                 draws.draws[i].psi(0, 0));
    std::vector<double> all;
    for (const auto& ch : c) all.insert(all.end(), ch.begin(), ch.end());
    const double n = static_cast<double>(all.size());
    double mean = 0.0;
    for (double v : all) mean += v;
    mean /= n;
    double var = 0.0, m4 = 0.0;
    for (double v : all) {
      var += (v - mean) * (v - mean);
      m4 += std::pow(v - mean, 4);
    }
    var /= n;
    m4 /= n;
    const double sd = std::sqrt(var);
    std::vector<std::vector<double>> sq = c;
    for (auto& ch : sq)
      for (double& v : ch) v = (v - mean) * (v - mean);
    const double ess_mean = effective_sample_size(c);
    const double ess_sq = effective_sample_size(sq);
    const double mcse_mean = sd / std::sqrt(ess_mean);
    const double mcse_sd = std::sqrt((m4 - var * var) / ess_sq) / (2.0 * sd);

    // At lambda = 0 the oracle is the prior itself: contrast ~ N(0, 2).
    const oracle::Moments truth = lambda == 0.0 ? oracle::Moments{0.0, std::sqrt(2.0)}
                                                : oracle::contrast_quadrature(counts[0], counts[1],
                                                                              lambda, 1.0);
    const double zm = std::abs(mean - truth.mean) / mcse_mean;
    const double zs = std::abs(sd - truth.sd) / mcse_sd;
    pass = pass && zm < 3.0 && zs < 3.0;
    detail += " lambda=" + fmt(lambda, 2) + ": mean " + fmt(mean) + " vs " + fmt(truth.mean) +
              " (" + fmt(zm, 2) + " mcse), sd " + fmt(sd) + " vs " + fmt(truth.sd) + " (" +
              fmt(zs, 2) + " mcse);";
  }
  return {pass, detail};
}

GeneratorConfig well_specified_generator(std::uint64_t seed) {
  GeneratorConfig g;
  g.num_snippets = 200;
  g.vocab_size = 50;
  g.num_senses = 2;
  g.num_times = 4;
  g.num_genres = 1;
  // True logits drawn at the model's prior scale.
  g.sd_phi = 1.0;
  g.sd_psi = 1.0;
  g.seed = seed;
  return g;
}

// 5. Well-specified PPC sanity.
Outcome criterion5() {
  int inside = 0;
  std::string detail;
  for (int run = 0; run < 10; ++run) {
    const SyntheticData data = generate_synthetic(well_specified_generator(5000 + run));
    McmcConfig mcmc;
    mcmc.seed = 9000 + run;
    const ModelConfig model{2, 1.0, 1.0};
    const PosteriorDraws draws = relabel_draws(sample_posterior(data.corpus, model, 1.0, mcmc));
    const PpcResult r = run_ppc(data.corpus, draws, 7000 + run);
    std::vector<double> ref = r.ref_diagnostics;
    std::sort(ref.begin(), ref.end());
    auto quantile = [&](double q) {
      const double pos = q * (static_cast<double>(ref.size()) - 1.0);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, ref.size() - 1);
      return ref[lo] + (pos - static_cast<double>(lo)) * (ref[hi] - ref[lo]);
    };
    const bool ok = r.observed_at_mean >= quantile(0.01) && r.observed_at_mean <= quantile(0.99);
    if (ok) ++inside;
    detail += " " + fmt(r.p_mean, 3);
  }
  return {inside >= 8, std::to_string(inside) + "/10 inside central 98%; p_mean:" + detail};
}

GeneratorConfig misspecified_generator() {
  GeneratorConfig g;
  g.num_snippets = 300;
  g.snippet_length = 14;
  g.burst_words = 4;
  g.vocab_size = 60;
  g.num_senses = 2;
  g.num_genres = 1;
  g.num_times = 6;
  g.sd_psi = 0.6;
  g.misspecification = Misspecification::burstiness;
  g.seed = 606;
  return g;
}

SelectorConfig misspecified_selector() {
  SelectorConfig sel;
  sel.mcmc.seed = 6060;
  return sel;
}

// 6. Misspecified end-to-end sweep.
Outcome criterion6() {
  const SyntheticData data = generate_synthetic(misspecified_generator());
  const ModelConfig model{2, 1.0, 1.0};
  const LambdaReport report = select_lambda(data.corpus, model, misspecified_selector());

  std::string detail = "p_mean:";
  std::vector<double> p;
  std::map<double, double> brier;
  for (const auto& r : report.records) {
    if (!r.ok) return {false, "lambda " + fmt(r.lambda) + " failed: " + r.error};
    p.push_back(r.p_mean);
    detail += " " + fmt(r.p_mean, 3);
    if (r.brier) brier[r.lambda] = *r.brier;
  }
  detail += "; brier:";
  for (const auto& r : report.records) detail += " " + (r.brier ? fmt(*r.brier, 3) : "NA");

  const bool c1 = p.front() >= 0.5;
  int violations = 0;
  bool small = true;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[i - 1]) {
      ++violations;
      small = small && p[i] - p[i - 1] <= 0.05;
    }
  const bool c2 = violations <= 1 && small;
  const bool c3 = p.back() == 0.0;
  bool c4 = false, c5 = false;
  std::string sel = "none";
  if (report.selected && brier.count(*report.selected) && brier.count(1.0)) {
    sel = fmt(*report.selected);
    double best = brier.begin()->second;
    for (const auto& [l, b] : brier) best = std::min(best, b);
    const double bs = brier.at(*report.selected);
    c4 = bs <= brier.at(1.0);
    c5 = bs - best <= 0.02;
  }
  detail += "; selected " + sel + "; (i)" + (c1 ? "ok" : "FAIL") + " (ii)" + (c2 ? "ok" : "FAIL") +
            " (iii)" + (c3 ? "ok" : "FAIL") + " (iv)" + (c4 ? "ok" : "FAIL") + " (v)" +
            (c5 ? "ok" : "FAIL");
  return {c1 && c2 && c3 && c4 && c5, detail};
}

// 7. Brier properties and mapping search.
Outcome criterion7() {
  const std::vector<int> labels{0, 1, 1, 0};
  RowMatrixXd perfect(4, 2), uniform(4, 2), wrong(4, 2);
  perfect << 1, 0, 0, 1, 0, 1, 1, 0;
  uniform.setConstant(0.5);
  wrong << 0, 1, 1, 0, 1, 0, 0, 1;
  bool pass = brier_score(perfect, labels) == 0.0 && brier_score(uniform, labels) == 0.5 &&
              brier_score(wrong, labels) == 2.0;
  std::string detail = std::string("fixed cases ") + (pass ? "ok" : "FAIL");

  std::mt19937_64 gen(7);
  int agree = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const int D = 5 + rep;
    RowMatrixXd probs(D, 3);
    std::vector<int> y(static_cast<std::size_t>(D));
    for (int d = 0; d < D; ++d) {
      const auto row = oracle::softmax({std::normal_distribution<double>(0, 2)(gen),
                                        std::normal_distribution<double>(0, 2)(gen),
                                        std::normal_distribution<double>(0, 2)(gen)});
      for (int k = 0; k < 3; ++k) probs(d, k) = row[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(d)] = static_cast<int>(gen() % 2);
    }
    const double exhaustive = oracle::best_surjective_brier(probs, y, 2);
    if (std::abs(map_senses(probs, y, 2).brier - exhaustive) < 1e-12) ++agree;
  }
  pass = pass && agree == 20;
  return {pass, detail + "; mapping search " + std::to_string(agree) + "/20"};
}

// 8. p-value estimators against brute-force counts.
Outcome criterion8() {
  std::mt19937_64 gen(8);
  int agree = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int N = 1 + static_cast<int>(gen() % 50);
    std::vector<double> ref(static_cast<std::size_t>(N)), obs(static_cast<std::size_t>(N));
    // Coarse values so ties occur.
    for (auto& v : ref) v = std::floor(std::normal_distribution<double>(0, 3)(gen));
    for (auto& v : obs) v = std::floor(std::normal_distribution<double>(0, 3)(gen));
    const double at_mean = std::floor(std::normal_distribution<double>(0, 3)(gen));

    double mean_obs = 0.0;
    for (double v : obs) mean_obs += v;
    mean_obs /= N;
    int paired = 0;
    for (int n = 0; n < N; ++n)
      if (ref[static_cast<std::size_t>(n)] < obs[static_cast<std::size_t>(n)]) ++paired;
    const double brute_mean = oracle::indicator_fraction(ref, at_mean);
    const double brute_avg = oracle::indicator_fraction(ref, mean_obs);
    const double brute_paired = static_cast<double>(paired) / N;

    PpcResult r;
    r.ref_diagnostics = ref;
    r.observed_at_draws = obs;
    r.observed_at_mean = at_mean;
    compute_pvalues(r);
    const double p_mean = r.p_mean, p_avg = r.p_avg, p_paired = r.p_paired;

    const bool in_range = p_mean >= 0 && p_mean <= 1 && p_avg >= 0 && p_avg <= 1 &&
                          p_paired >= 0 && p_paired <= 1;
    if (in_range && p_mean == brute_mean && p_avg == brute_avg && p_paired == brute_paired) ++agree;
  }
  return {agree == 100, std::to_string(agree) + "/100 inputs agree"};
}

std::string read_file(const fs::path& p) { return read_text(p); }

// Runs simulate, fit, ppc, score, select and report through the CLI in `dir`.
int run_pipeline(const fs::path& dir, int jobs) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const GeneratorConfig g = misspecified_generator();
  nlohmann::ordered_json cfg;
  cfg["seed"] = 6060;
  cfg["paths"] = {{"corpus", "corpus.json"}, {"out_dir", "."}};
  cfg["model"] = to_json(ModelConfig{2, 1.0, 1.0});
  cfg["mcmc"] = to_json(misspecified_selector().mcmc);
  cfg["mcmc"].erase("seed");
  cfg["generator"] = to_json(g);
  cfg["generator"].erase("seed");
  cfg["selector"] = {{"grid", {1.0}}, {"alpha", 0.1}};
  write_text(dir / "config.json", cfg.dump(2) + "\n");

  std::ostringstream out, err;
  const std::string conf = (dir / "config.json").string();
  const std::string j = std::to_string(jobs);
  const std::vector<std::vector<std::string>> steps{
      {"gbsel", "--config", conf, "--jobs", j, "simulate"},
      {"gbsel", "--config", conf, "--jobs", j, "fit", "--lambda", "1"},
      {"gbsel", "--config", conf, "--jobs", j, "ppc", "--draws", (dir / "draws_lambda_1.0000.jsonl").string()},
      {"gbsel", "--config", conf, "--jobs", j, "score", "--draws", (dir / "draws_lambda_1.0000.jsonl").string()},
      {"gbsel", "--config", conf, "--jobs", j, "--out-dir", (dir / "select").string(), "select"},
      {"gbsel", "--config", conf, "--jobs", j, "--out-dir", (dir / "select").string(), "report"},
  };
  for (const auto& args : steps) {
    const int code = run_cli(args, out, err);
    if (code != 0) {
      std::cerr << err.str();
      return code;
    }
  }
  return 0;
}

// Byte contents of every output file under `dir`, keyed by relative path.
// The creation timestamp of report.json is removed.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).string();
    std::string text = read_file(entry.path());
    if (entry.path().filename() == "report.json") {
      auto j = nlohmann::ordered_json::parse(text);
      j.erase("metadata");
      text = j.dump(2);
    }
    files[rel] = text;
  }
  return files;
}

// 9. Determinism across re-runs and worker counts.
Outcome criterion9() {
  const fs::path base = fs::temp_directory_path() / "gbsel_acceptance_9";
  std::vector<std::map<std::string, std::string>> runs;
  for (int jobs : {1, 1, 4}) {
    const fs::path dir = base / ("run" + std::to_string(runs.size()));
    const int code = run_pipeline(dir, jobs);
    if (code != 0) return {false, "pipeline exited with code " + std::to_string(code)};
    runs.push_back(snapshot(dir));
  }
  fs::remove_all(base);
  std::string diff;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != runs[0].size()) diff += " file sets differ";
    for (const auto& [name, text] : runs[0]) {
      auto it = runs[r].find(name);
      if (it == runs[r].end() || it->second != text) diff += " " + name;
    }
  }
  if (!diff.empty()) return {false, "outputs differ:" + diff};
  return {true, std::to_string(runs[0].size()) + " files byte-identical over 3 runs (jobs 1, 1, 4)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3,
                                                       criterion4, criterion5, criterion6,
                                                       criterion7, criterion8, criterion9};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 9; ++i) selected.push_back(i);

  bool all = true;
  for (int id : selected) {
    if (id < 1 || id > 9) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(id - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " [" << fmt(secs, 3)
              << " s] " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
