#include "gbsel/serialize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gbsel/errors.hpp"

namespace gbsel {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown field '" + section + "." + key + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + section + "." + key + "' has the wrong type");
  }
}

std::vector<double> flat_row_major(const RowMatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

RowMatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
    throw DataError(where + ": expected " + std::to_string(rows * cols) + " values");
  RowMatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw DataError(where + ": non-numeric value");
    m.data()[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return m;
}

ordered_json nested_rows(const RowMatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---------------------------------------------------------------- configs

ordered_json to_json(const ModelConfig& c) {
  return {{"num_senses", c.num_senses}, {"prior_sd_phi", c.prior_sd_phi}, {"prior_sd_psi", c.prior_sd_psi}};
}

ordered_json to_json(const McmcConfig& c) {
  return {{"num_draws", c.num_draws},
          {"num_warmup", c.num_warmup},
          {"num_chains", c.num_chains},
          {"leapfrog_min", c.leapfrog_min},
          {"leapfrog_max", c.leapfrog_max},
          {"target_accept", c.target_accept},
          {"init_sd", c.init_sd},
          {"max_divergent_fraction", c.max_divergent_fraction},
          {"seed", c.seed}};
}

ordered_json to_json(const GeneratorConfig& c) {
  return {{"num_snippets", c.num_snippets},
          {"vocab_size", c.vocab_size},
          {"num_genres", c.num_genres},
          {"num_times", c.num_times},
          {"num_senses", c.num_senses},
          {"snippet_length", c.snippet_length},
          {"sd_phi", c.sd_phi},
          {"sd_psi", c.sd_psi},
          {"misspecification", to_string(c.misspecification)},
          {"burst_words", c.burst_words},
          {"copies", c.copies},
          {"seed", c.seed}};
}

void update_from_json(ModelConfig& c, const json& j) {
  check_keys(j, {"num_senses", "prior_sd_phi", "prior_sd_psi"}, "model");
  read_field(j, "num_senses", c.num_senses, "model");
  read_field(j, "prior_sd_phi", c.prior_sd_phi, "model");
  read_field(j, "prior_sd_psi", c.prior_sd_psi, "model");
}

void update_from_json(McmcConfig& c, const json& j) {
  check_keys(j,
             {"num_draws", "num_warmup", "num_chains", "leapfrog_min", "leapfrog_max", "target_accept",
              "init_sd", "max_divergent_fraction", "seed"},
             "mcmc");
  read_field(j, "num_draws", c.num_draws, "mcmc");
  read_field(j, "num_warmup", c.num_warmup, "mcmc");
  read_field(j, "num_chains", c.num_chains, "mcmc");
  read_field(j, "leapfrog_min", c.leapfrog_min, "mcmc");
  read_field(j, "leapfrog_max", c.leapfrog_max, "mcmc");
  read_field(j, "target_accept", c.target_accept, "mcmc");
  read_field(j, "init_sd", c.init_sd, "mcmc");
  read_field(j, "max_divergent_fraction", c.max_divergent_fraction, "mcmc");
  read_field(j, "seed", c.seed, "mcmc");
}

void update_from_json(GeneratorConfig& c, const json& j) {
  check_keys(j,
             {"num_snippets", "vocab_size", "num_genres", "num_times", "num_senses", "snippet_length",
              "sd_phi", "sd_psi", "misspecification", "burst_words", "copies", "seed"},
             "generator");
  read_field(j, "num_snippets", c.num_snippets, "generator");
  read_field(j, "vocab_size", c.vocab_size, "generator");
  read_field(j, "num_genres", c.num_genres, "generator");
  read_field(j, "num_times", c.num_times, "generator");
  read_field(j, "num_senses", c.num_senses, "generator");
  read_field(j, "snippet_length", c.snippet_length, "generator");
  read_field(j, "sd_phi", c.sd_phi, "generator");
  read_field(j, "sd_psi", c.sd_psi, "generator");
  if (j.contains("misspecification")) {
    std::string m;
    read_field(j, "misspecification", m, "generator");
    c.misspecification = misspecification_from_string(m);
  }
  read_field(j, "burst_words", c.burst_words, "generator");
  read_field(j, "copies", c.copies, "generator");
  read_field(j, "seed", c.seed, "generator");
}

// ---------------------------------------------------------------- draws

void save_draws(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ostringstream out;
  ordered_json header = {{"format", "gbsel-draws"},
                         {"version", 1},
                         {"num_genres", draws.dims.genres},
                         {"num_times", draws.dims.times},
                         {"num_senses", draws.dims.senses},
                         {"vocab_size", draws.dims.vocab},
                         {"lambda", draws.lambda},
                         {"seed", draws.seed},
                         {"num_draws", draws.size()},
                         {"num_chains", draws.num_chains()},
                         {"accept_rate", draws.accept_rate},
                         {"divergent_fraction", draws.divergent_fraction},
                         {"divergence_warning", draws.divergence_warning},
                         {"step_sizes", draws.step_sizes},
                         {"mcmc", to_json(draws.mcmc)},
                         {"model", to_json(draws.model)}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < draws.size(); ++i) {
    ordered_json rec = {{"draw", i + 1},
                        {"chain", draws.chain_ids[i] + 1},
                        {"log_post", i < draws.log_post.size() ? number_or_null(draws.log_post[i]) : nullptr},
                        {"phi", flat_row_major(draws.draws[i].phi)},
                        {"psi", flat_row_major(draws.draws[i].psi)}};
    out << rec.dump() << '\n';
  }
  write_text(path, out.str());
}

PosteriorDraws load_draws(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  const std::string where = path.string();
  if (!std::getline(in, line)) throw DataError(where + ": empty draws file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(where + ": line 1: " + e.what());
  }
  if (header.value("format", "") != "gbsel-draws") throw DataError(where + ": not a draws file");

  PosteriorDraws d;
  try {
    d.dims = {header.at("num_genres").get<int>(), header.at("num_times").get<int>(),
              header.at("num_senses").get<int>(), header.at("vocab_size").get<int>()};
    d.lambda = header.at("lambda").get<double>();
    d.seed = header.at("seed").get<std::uint64_t>();
    d.accept_rate = header.at("accept_rate").get<double>();
    d.divergent_fraction = header.at("divergent_fraction").get<double>();
    d.divergence_warning = header.at("divergence_warning").get<bool>();
    d.step_sizes = header.at("step_sizes").get<std::vector<double>>();
    update_from_json(d.mcmc, header.at("mcmc"));
    update_from_json(d.model, header.at("model"));
  } catch (const json::exception& e) {
    throw DataError(where + ": line 1: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(where + ": line 1: " + e.what());
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string at = where + ": line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(at + ": " + e.what());
    }
    if (!rec.contains("phi") || !rec.contains("psi") || !rec.contains("chain"))
      throw DataError(at + ": draw record needs 'chain', 'phi' and 'psi'");
    ParamState p;
    p.dims = d.dims;
    p.phi = matrix_from(rec.at("phi"), d.dims.phi_rows(), d.dims.senses, at + ": field 'phi'");
    p.psi = matrix_from(rec.at("psi"), d.dims.psi_rows(), d.dims.vocab, at + ": field 'psi'");
    if (!p.all_finite()) throw DataError(at + ": non-finite parameter");
    d.draws.push_back(std::move(p));
    d.chain_ids.push_back(rec.at("chain").get<int>() - 1);
    const auto& lp = rec.value("log_post", json());
    d.log_post.push_back(lp.is_number() ? lp.get<double>() : std::nan(""));
  }
  return d;
}

void save_truth(const SyntheticTruth& truth, const std::filesystem::path& path) {
  std::vector<int> labels(truth.labels);
  for (int& l : labels) ++l;
  ordered_json j = {{"generator", to_json(truth.config)},
                    {"phi_tilde", nested_rows(truth.probs.phi_tilde)},
                    {"psi_tilde", nested_rows(truth.probs.psi_tilde)},
                    {"labels", labels}};
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- ppc

ordered_json to_json(const PpcResult& r) {
  return {{"lambda", r.lambda},
          {"p_mean", r.p_mean},
          {"p_paired", r.p_paired},
          {"p_avg", r.p_avg},
          {"observed_at_mean", r.observed_at_mean},
          {"ref_diagnostics", r.ref_diagnostics},
          {"observed_at_draws", r.observed_at_draws}};
}

void save_ppc_json(const PpcResult& r, const std::filesystem::path& path) {
  write_text(path, to_json(r).dump(2) + "\n");
}

PpcResult load_ppc_json(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_text(path));
    PpcResult r;
    r.lambda = j.at("lambda").get<double>();
    r.p_mean = j.at("p_mean").get<double>();
    r.p_paired = j.at("p_paired").get<double>();
    r.p_avg = j.at("p_avg").get<double>();
    r.observed_at_mean = j.at("observed_at_mean").get<double>();
    r.ref_diagnostics = j.at("ref_diagnostics").get<std::vector<double>>();
    r.observed_at_draws = j.at("observed_at_draws").get<std::vector<double>>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_ppc_csv(const PpcResult& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "draw_index,ref_diagnostic,observed_at_draw\n";
  for (std::size_t i = 0; i < r.ref_diagnostics.size(); ++i)
    out << i + 1 << ',' << csv_number(r.ref_diagnostics[i]) << ','
        << csv_number(r.observed_at_draws[i]) << '\n';
  write_text(path, out.str());
}

// ---------------------------------------------------------------- report

ordered_json to_json(const LambdaReport& r, const std::optional<std::string>& timestamp) {
  ordered_json records = ordered_json::array();
  for (const auto& rec : r.records) {
    ordered_json j = {{"lambda", rec.lambda}, {"ok", rec.ok}, {"skipped", rec.skipped}};
    if (rec.ok) {
      j["p_mean"] = rec.p_mean;
      j["p_paired"] = rec.p_paired;
      j["p_avg"] = rec.p_avg;
      j["brier"] = rec.brier ? ordered_json(*rec.brier) : ordered_json(nullptr);
      j["collapsed"] = rec.collapsed;
      j["accept_rate"] = rec.accept_rate;
      j["divergent_fraction"] = rec.divergent_fraction;
      j["draws_file"] = rec.draws_file;
      j["ppc_file"] = rec.ppc_file;
    } else if (!rec.skipped) {
      j["error"] = rec.error;
    }
    records.push_back(j);
  }
  ordered_json out = {{"alpha", r.alpha},
                      {"selected", r.selected ? ordered_json(*r.selected) : ordered_json(nullptr)},
                      {"records", records}};
  if (timestamp) out["metadata"] = {{"created", *timestamp}};
  return out;
}

LambdaReport report_from_json(const json& j) {
  LambdaReport r;
  r.alpha = j.at("alpha").get<double>();
  if (!j.at("selected").is_null()) r.selected = j.at("selected").get<double>();
  for (const auto& jr : j.at("records")) {
    LambdaRecord rec;
    rec.lambda = jr.at("lambda").get<double>();
    rec.ok = jr.at("ok").get<bool>();
    rec.skipped = jr.value("skipped", false);
    if (rec.ok) {
      rec.p_mean = jr.at("p_mean").get<double>();
      rec.p_paired = jr.at("p_paired").get<double>();
      rec.p_avg = jr.at("p_avg").get<double>();
      if (!jr.at("brier").is_null()) rec.brier = jr.at("brier").get<double>();
      rec.collapsed = jr.at("collapsed").get<bool>();
      rec.accept_rate = jr.value("accept_rate", 0.0);
      rec.divergent_fraction = jr.value("divergent_fraction", 0.0);
      rec.draws_file = jr.value("draws_file", "");
      rec.ppc_file = jr.value("ppc_file", "");
    } else {
      rec.error = jr.value("error", "");
    }
    r.records.push_back(rec);
  }
  return r;
}

void save_report_json(const LambdaReport& r, const std::filesystem::path& path,
                      const std::optional<std::string>& timestamp) {
  write_text(path, to_json(r, timestamp).dump(2) + "\n");
}

LambdaReport load_report_json(const std::filesystem::path& path) {
  try {
    return report_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string report_csv(const LambdaReport& r) {
  std::ostringstream out;
  out << "lambda,p_mean,p_paired,p_avg,brier,collapsed,selected\n";
  for (const auto& rec : r.records) {
    const bool selected = r.selected && *r.selected == rec.lambda;
    out << csv_number(rec.lambda) << ',';
    if (rec.ok)
      out << csv_number(rec.p_mean) << ',' << csv_number(rec.p_paired) << ',' << csv_number(rec.p_avg);
    else
      out << ",,";
    out << ',' << (rec.brier ? csv_number(*rec.brier) : "") << ',' << (rec.ok ? (rec.collapsed ? "1" : "0") : "")
        << ',' << (selected ? "1" : "0") << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- eval

ordered_json to_json(const EvalReport& r) {
  std::vector<std::vector<int>> mapping(r.mapping);
  for (auto& slice : mapping)
    for (int& m : slice) ++m;
  ordered_json top = ordered_json::array();
  for (std::size_t k = 0; k < r.top_words.size(); ++k) {
    ordered_json words = ordered_json::array();
    for (std::size_t i = 0; i < r.top_words[k].size(); ++i)
      words.push_back({{"word_id", r.top_words[k][i] + 1}, {"probability", r.top_word_probs[k][i]}});
    top.push_back(words);
  }
  return {{"lambda", r.lambda},
          {"brier", r.brier ? ordered_json(*r.brier) : ordered_json(nullptr)},
          {"collapsed", r.collapsed},
          {"mapping", mapping},
          {"pairwise_divergence", nested_rows(r.pairwise_divergence)},
          {"top_words", top}};
}

std::string per_snippet_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "snippet";
  for (Eigen::Index k = 0; k < r.per_snippet_probs.cols(); ++k) out << ",sense_" << k + 1;
  out << '\n';
  for (Eigen::Index d = 0; d < r.per_snippet_probs.rows(); ++d) {
    out << d + 1;
    for (Eigen::Index k = 0; k < r.per_snippet_probs.cols(); ++k)
      out << ',' << csv_number(r.per_snippet_probs(d, k));
    out << '\n';
  }
  return out.str();
}

std::string top_words_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "sense,rank,word_id,probability\n";
  for (std::size_t k = 0; k < r.top_words.size(); ++k)
    for (std::size_t i = 0; i < r.top_words[k].size(); ++i)
      out << k + 1 << ',' << i + 1 << ',' << r.top_words[k][i] + 1 << ','
          << csv_number(r.top_word_probs[k][i]) << '\n';
  return out.str();
}

std::string prevalence_csv(const EvalReport& r, const Dims& dims) {
  std::ostringstream out;
  out << "genre,time,sense,mean,hpd_lo,hpd_hi\n";
  for (std::size_t row = 0; row < r.prevalence_hpd.size(); ++row) {
    const int g = static_cast<int>(row) / dims.times;
    const int t = static_cast<int>(row) % dims.times;
    for (std::size_t k = 0; k < r.prevalence_hpd[row].size(); ++k)
      out << g + 1 << ',' << t + 1 << ',' << k + 1 << ',' << csv_number(r.prevalence_mean[row][k]) << ','
          << csv_number(r.prevalence_hpd[row][k].first) << ','
          << csv_number(r.prevalence_hpd[row][k].second) << '\n';
  }
  return out.str();
}

}  // namespace gbsel
