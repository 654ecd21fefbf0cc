#include "gbsel/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gbsel/diagnostics.hpp"
#include "gbsel/errors.hpp"
#include "gbsel/ppc.hpp"
#include "gbsel/serialize.hpp"

namespace gbsel {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown config field '" + section + "." + key + "'");
}

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + field + "' has the wrong type");
  }
}

/// Exclusive lock file held for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw ConfigError("output directory is locked by another sweep ('" + path_.string() +
                        "' exists)");
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", lambda);
  return buf;
}

std::uint64_t require_seed(const RunConfig& cfg) {
  if (!cfg.seed) throw ConfigError("a seed is required: set 'seed' in the config or pass --seed");
  return *cfg.seed;
}

Corpus require_corpus(const RunConfig& cfg) {
  if (!cfg.corpus_path)
    throw ConfigError("no corpus given: set 'paths.corpus' in the config or pass --corpus");
  if (!fs::exists(*cfg.corpus_path))
    throw ConfigError("corpus file '" + cfg.corpus_path->string() + "' does not exist");
  return load_corpus(*cfg.corpus_path);
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ConfigError(what + " '" + p.string() + "' does not exist");
}

// ---------------------------------------------------------------- commands

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  GeneratorConfig gen = cfg.generator;
  gen.seed = require_seed(cfg);
  const SyntheticData data = generate_synthetic(gen);
  fs::create_directories(cfg.out_dir);
  save_corpus(data.corpus, cfg.out_dir / "corpus.json");
  save_truth(data.truth, cfg.out_dir / "truth.json");
  out << "wrote " << (cfg.out_dir / "corpus.json").string() << " (" << data.corpus.size()
      << " snippets) and " << (cfg.out_dir / "truth.json").string() << '\n';
}

void cmd_fit(const RunConfig& cfg, double lambda, const std::optional<fs::path>& output, std::ostream& out) {
  const Corpus corpus = require_corpus(cfg);
  McmcConfig mcmc = cfg.mcmc;
  mcmc.seed = require_seed(cfg);
  PosteriorDraws draws = sample_posterior(corpus, cfg.model, lambda, mcmc, cfg.jobs);
  draws = relabel_draws(draws);
  fs::create_directories(cfg.out_dir);
  const fs::path path = output ? *output : cfg.out_dir / ("draws_lambda_" + lambda_tag(lambda) + ".jsonl");
  save_draws(draws, path);
  out << "wrote " << path.string() << ": " << draws.size() << " draws, accept rate "
      << draws.accept_rate << ", divergent fraction " << draws.divergent_fraction << '\n';
  if (draws.divergence_warning)
    out << "warning: divergent fraction exceeds " << mcmc.max_divergent_fraction << '\n';
  if (draws.size() >= 4) {
    for (const auto& s : convergence_summary(draws).scalars)
      out << "  " << s.name << ": ess " << s.ess << ", split R-hat " << s.rhat
          << (s.degenerate ? " (degenerate)" : "") << '\n';
  }
}

void cmd_ppc(const RunConfig& cfg, const fs::path& draws_path, std::ostream& out) {
  require_file(draws_path, "draws file");
  const Corpus corpus = require_corpus(cfg);
  const PosteriorDraws draws = load_draws(draws_path);
  const PpcResult result = run_ppc(corpus, draws, require_seed(cfg), cfg.jobs);
  fs::create_directories(cfg.out_dir);
  const std::string tag = lambda_tag(draws.lambda);
  save_ppc_json(result, cfg.out_dir / ("ppc_lambda_" + tag + ".json"));
  save_ppc_csv(result, cfg.out_dir / ("ppc_lambda_" + tag + ".csv"));
  out << "lambda " << draws.lambda << ": p_mean " << result.p_mean << ", p_paired " << result.p_paired
      << ", p_avg " << result.p_avg << '\n';
}

void cmd_select(const RunConfig& cfg, std::ostream& out) {
  const Corpus corpus = require_corpus(cfg);
  SelectorConfig sel = cfg.selector;
  sel.mcmc = cfg.mcmc;
  sel.mcmc.seed = require_seed(cfg);
  sel.eval = cfg.eval;
  sel.jobs = cfg.jobs;
  fs::create_directories(cfg.out_dir);
  DirectoryLock lock(cfg.out_dir / ".gbsel.lock");
  const LambdaReport report = select_lambda(corpus, cfg.model, sel, cfg.out_dir);
  save_report_json(report, cfg.out_dir / "report.json", utc_timestamp());
  write_text(cfg.out_dir / "report.csv", report_csv(report));
  for (const auto& r : report.records) {
    out << "lambda " << r.lambda << ": ";
    if (r.ok)
      out << "p_mean " << r.p_mean << (r.collapsed ? " (collapsed)" : "") << '\n';
    else if (r.skipped)
      out << "skipped\n";
    else
      out << "failed: " << r.error << '\n';
  }
  if (report.selected)
    out << "selected lambda " << *report.selected << '\n';
  else
    out << "no lambda has p_mean > " << report.alpha << '\n';
}

void cmd_score(const RunConfig& cfg, const fs::path& draws_path, std::ostream& out) {
  require_file(draws_path, "draws file");
  const Corpus corpus = require_corpus(cfg);
  if (!corpus.has_labels())
    throw DataError("scoring requires true sense labels: the corpus has no 'label' fields");
  const PosteriorDraws draws = load_draws(draws_path);
  const EvalReport report = evaluate(corpus, draws, cfg.eval);
  fs::create_directories(cfg.out_dir);
  const std::string tag = lambda_tag(draws.lambda);
  write_text(cfg.out_dir / ("eval_lambda_" + tag + ".json"), to_json(report).dump(2) + "\n");
  write_text(cfg.out_dir / ("probs_lambda_" + tag + ".csv"), per_snippet_csv(report));
  write_text(cfg.out_dir / ("top_words_lambda_" + tag + ".csv"), top_words_csv(report));
  write_text(cfg.out_dir / ("prevalence_lambda_" + tag + ".csv"), prevalence_csv(report, draws.dims));
  out << "lambda " << draws.lambda << ": ";
  if (report.brier)
    out << "Brier score " << *report.brier << '\n';
  else
    out << "senses collapsed, no Brier score\n";
}

void cmd_report(const RunConfig& cfg, const fs::path& report_path, std::ostream& out) {
  require_file(report_path, "report file");
  const LambdaReport report = load_report_json(report_path);
  const fs::path base = report_path.parent_path();
  fs::create_directories(cfg.out_dir);

  write_text(cfg.out_dir / "summary.csv", report_csv(report));

  std::ostringstream pcurve;
  pcurve << "lambda,p_mean,p_paired,p_avg,alpha\n";
  std::ostringstream bcurve;
  bcurve << "lambda,brier,collapsed,selected\n";
  std::ostringstream samples;
  samples << "lambda,draw_index,ref_diagnostic,observed_at_draw,observed_at_mean\n";
  for (const auto& r : report.records) {
    if (!r.ok) continue;
    pcurve << csv_number(r.lambda) << ',' << csv_number(r.p_mean) << ',' << csv_number(r.p_paired) << ','
           << csv_number(r.p_avg) << ',' << csv_number(report.alpha) << '\n';
    const bool selected = report.selected && *report.selected == r.lambda;
    bcurve << csv_number(r.lambda) << ',' << (r.brier ? csv_number(*r.brier) : "") << ','
           << (r.collapsed ? 1 : 0) << ',' << (selected ? 1 : 0) << '\n';
    if (!r.ppc_file.empty() && fs::exists(base / r.ppc_file)) {
      const PpcResult ppc = load_ppc_json(base / r.ppc_file);
      for (std::size_t i = 0; i < ppc.ref_diagnostics.size(); ++i)
        samples << csv_number(r.lambda) << ',' << i + 1 << ',' << csv_number(ppc.ref_diagnostics[i]) << ','
                << csv_number(ppc.observed_at_draws[i]) << ',' << csv_number(ppc.observed_at_mean) << '\n';
    }
  }
  write_text(cfg.out_dir / "pvalue_curve.csv", pcurve.str());
  write_text(cfg.out_dir / "brier_curve.csv", bcurve.str());
  write_text(cfg.out_dir / "ppc_samples.csv", samples.str());
  out << "wrote summary.csv, pvalue_curve.csv, brier_curve.csv, ppc_samples.csv to "
      << cfg.out_dir.string() << '\n';
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  check_keys(j, {"seed", "paths", "model", "mcmc", "selector", "generator", "eval", "jobs"}, "config");
  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j.at("seed"), "seed");
  if (j.contains("jobs")) cfg.jobs = get_as<int>(j.at("jobs"), "jobs");
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p, {"corpus", "out_dir"}, "paths");
    auto resolve = [&](const std::string& s) {
      fs::path path(s);
      return path.is_absolute() ? path : base_dir / path;
    };
    if (p.contains("corpus")) cfg.corpus_path = resolve(get_as<std::string>(p.at("corpus"), "paths.corpus"));
    if (p.contains("out_dir")) cfg.out_dir = resolve(get_as<std::string>(p.at("out_dir"), "paths.out_dir"));
  }
  if (j.contains("model")) update_from_json(cfg.model, j.at("model"));
  if (j.contains("mcmc")) update_from_json(cfg.mcmc, j.at("mcmc"));
  if (j.contains("generator")) update_from_json(cfg.generator, j.at("generator"));
  if (j.contains("selector")) {
    const json& s = j.at("selector");
    check_keys(s, {"grid", "alpha", "early_stop"}, "selector");
    if (s.contains("grid")) cfg.selector.grid = get_as<std::vector<double>>(s.at("grid"), "selector.grid");
    if (s.contains("alpha")) cfg.selector.alpha = get_as<double>(s.at("alpha"), "selector.alpha");
    if (s.contains("early_stop"))
      cfg.selector.early_stop = get_as<bool>(s.at("early_stop"), "selector.early_stop");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"collapse_threshold", "top_words", "hpd_mass"}, "eval");
    if (e.contains("collapse_threshold"))
      cfg.eval.collapse_threshold = get_as<double>(e.at("collapse_threshold"), "eval.collapse_threshold");
    if (e.contains("top_words")) cfg.eval.num_top_words = get_as<int>(e.at("top_words"), "eval.top_words");
    if (e.contains("hpd_mass")) cfg.eval.hpd_mass = get_as<double>(e.at("hpd_mass"), "eval.hpd_mass");
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning-rate selection for tempered posteriors via posterior predictive checks",
               "gbsel"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> jobs;
  std::string corpus_path;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "base random seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "output directory (overrides the config)");
  app.add_option("--jobs", jobs, "maximum worker threads")->check(CLI::PositiveNumber);
  app.add_option("--corpus", corpus_path, "corpus JSON file (overrides the config)");

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic corpus and its truth file");
  auto* fit = app.add_subcommand("fit", "sample the tempered posterior at one learning rate");
  double lambda = 1.0;
  std::string fit_output;
  fit->add_option("--lambda", lambda, "learning rate in [0, 1]")->required();
  fit->add_option("--output", fit_output, "draws file path");
  auto* ppc = app.add_subcommand("ppc", "posterior predictive check of a draws file");
  std::string ppc_draws;
  ppc->add_option("--draws", ppc_draws, "draws file")->required();
  auto* select = app.add_subcommand("select", "sweep the learning-rate grid and select a rate");
  auto* score = app.add_subcommand("score", "Brier score and sense summaries of a draws file");
  std::string score_draws;
  score->add_option("--draws", score_draws, "draws file")->required();
  auto* report = app.add_subcommand("report", "plot-ready CSV files from a selection report");
  std::string report_path;
  report->add_option("--report", report_path, "report.json written by select");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (jobs) cfg.jobs = *jobs;
    if (!corpus_path.empty()) cfg.corpus_path = fs::path(corpus_path);
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");

    if (simulate->parsed()) {
      cmd_simulate(cfg, out);
    } else if (fit->parsed()) {
      if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("--lambda must lie in [0, 1]");
      cmd_fit(cfg, lambda, fit_output.empty() ? std::nullopt : std::optional<fs::path>(fit_output), out);
    } else if (ppc->parsed()) {
      cmd_ppc(cfg, ppc_draws, out);
    } else if (select->parsed()) {
      cmd_select(cfg, out);
    } else if (score->parsed()) {
      cmd_score(cfg, score_draws, out);
    } else if (report->parsed()) {
      cmd_report(cfg, report_path.empty() ? cfg.out_dir / "report.json" : fs::path(report_path), out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace gbsel
