#include "gbsel/data.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <span>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gbsel/errors.hpp"
#include "gbsel/rng.hpp"

namespace gbsel {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Misspecification m) {
  switch (m) {
    case Misspecification::none: return "none";
    case Misspecification::burstiness: return "burstiness";
    case Misspecification::duplication: return "duplication";
  }
  return "none";
}

Misspecification misspecification_from_string(const std::string& s) {
  if (s == "none") return Misspecification::none;
  if (s == "burstiness") return Misspecification::burstiness;
  if (s == "duplication") return Misspecification::duplication;
  throw ConfigError("generator.misspecification must be one of none|burstiness|duplication, got '" +
                    s + "'");
}

void GeneratorConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v < 1) throw ConfigError(std::string("generator.") + field + " must be >= 1");
  };
  positive(num_snippets, "num_snippets");
  positive(vocab_size, "vocab_size");
  positive(num_genres, "num_genres");
  positive(num_times, "num_times");
  positive(num_senses, "num_senses");
  positive(snippet_length, "snippet_length");
  if (!(sd_phi >= 0.0)) throw ConfigError("generator.sd_phi must be >= 0");
  if (!(sd_psi >= 0.0)) throw ConfigError("generator.sd_psi must be >= 0");
  if (misspecification == Misspecification::burstiness) {
    if (burst_words < 1 || burst_words >= snippet_length)
      throw ConfigError("generator.burst_words (m) must satisfy 1 <= m < snippet_length (L); got m = " +
                        std::to_string(burst_words) + ", L = " + std::to_string(snippet_length));
    if (burst_words > vocab_size)
      throw ConfigError("generator.burst_words (m) must not exceed vocab_size");
  }
  if (misspecification == Misspecification::duplication) {
    if (copies < 1) throw ConfigError("generator.copies (c) must be >= 1");
    if (num_snippets % copies != 0)
      throw ConfigError("generator.copies (c) must divide generator.num_snippets");
  }
}

namespace {

// Draws m distinct ids with probability proportional to `probs`, sequentially
// without replacement.
std::vector<int> draw_distinct(std::vector<double> weights, int m, Rng& rng) {
  std::vector<int> out;
  for (int i = 0; i < m; ++i) {
    const int w = rng.categorical(weights);
    out.push_back(w);
    weights[static_cast<std::size_t>(w)] = 0.0;
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const GeneratorConfig& config) {
  config.validate();
  const Dims dims{config.num_genres, config.num_times, config.num_senses, config.vocab_size};

  Rng param_rng = Rng::stream(config.seed, 0);
  ParamState truth_logits = ParamState::zeros(dims);
  for (Eigen::Index i = 0; i < truth_logits.phi.size(); ++i)
    truth_logits.phi.data()[i] = param_rng.normal(0.0, config.sd_phi);
  for (Eigen::Index i = 0; i < truth_logits.psi.size(); ++i)
    truth_logits.psi.data()[i] = param_rng.normal(0.0, config.sd_psi);
  const ProbParams probs = to_probs(truth_logits);

  Rng rng = Rng::stream(config.seed, 1);
  const int cells = dims.genres * dims.times;
  const int copies = config.misspecification == Misspecification::duplication ? config.copies : 1;
  const int base_count = config.num_snippets / copies;

  Corpus corpus;
  corpus.vocab_size = config.vocab_size;
  corpus.num_genres = config.num_genres;
  corpus.num_times = config.num_times;
  corpus.num_true_senses = config.num_senses;
  std::vector<int> labels;

  for (int i = 0; i < base_count; ++i) {
    const int cell = i % cells;
    Snippet s;
    s.genre = cell / dims.times;
    s.time = cell % dims.times;
    const auto prevalence = probs.phi_tilde.row(dims.phi_index(s.genre, s.time));
    const int z = rng.categorical(
        std::span<const double>(prevalence.data(), static_cast<std::size_t>(prevalence.size())));
    const auto word_row = probs.psi_tilde.row(dims.psi_index(z, s.time));
    std::vector<double> word_probs(word_row.data(), word_row.data() + word_row.size());

    if (config.misspecification == Misspecification::burstiness) {
      const std::vector<int> sources = draw_distinct(word_probs, config.burst_words, rng);
      for (int pos = 0; pos < config.snippet_length; ++pos)
        s.words.push_back(sources[static_cast<std::size_t>(rng.uniform_int(0, config.burst_words - 1))]);
    } else {
      for (int pos = 0; pos < config.snippet_length; ++pos) s.words.push_back(rng.categorical(word_probs));
    }
    for (int c = 0; c < copies; ++c) {
      corpus.snippets.push_back(s);
      labels.push_back(z);
    }
  }
  corpus.labels = labels;
  corpus.validate();
  return {std::move(corpus), SyntheticTruth{probs, std::move(labels), config}};
}

Corpus corpus_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("corpus is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("corpus document must be a JSON object");

  auto int_field = [](const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw DataError(where + ": field '" + key + "' must be an integer");
    return v.get<long long>();
  };
  auto checked_int = [](long long v, const std::string& where, const char* key) {
    if (v < std::numeric_limits<int>::min() / 2 || v > std::numeric_limits<int>::max() / 2)
      throw DataError(where + ": field '" + key + "' out of range");
    return static_cast<int>(v);
  };

  Corpus corpus;
  corpus.vocab_size = checked_int(int_field(doc, "vocab_size", "corpus"), "corpus", "vocab_size");
  corpus.num_genres = checked_int(int_field(doc, "num_genres", "corpus"), "corpus", "num_genres");
  corpus.num_times = checked_int(int_field(doc, "num_times", "corpus"), "corpus", "num_times");
  if (doc.contains("num_true_senses"))
    corpus.num_true_senses =
        checked_int(int_field(doc, "num_true_senses", "corpus"), "corpus", "num_true_senses");
  if (!doc.contains("snippets") || !doc.at("snippets").is_array())
    throw DataError("corpus: field 'snippets' must be an array");

  std::vector<int> labels;
  std::size_t with_label = 0;
  const auto& snippets = doc.at("snippets");
  for (std::size_t d = 0; d < snippets.size(); ++d) {
    const std::string where = "snippet " + std::to_string(d + 1);
    const auto& js = snippets[d];
    if (!js.is_object()) throw DataError(where + ": must be a JSON object");
    Snippet s;
    if (!js.contains("words") || !js.at("words").is_array())
      throw DataError(where + ": field 'words' must be an array");
    for (const auto& w : js.at("words")) {
      if (!w.is_number_integer()) throw DataError(where + ": field 'words' must hold integers");
      s.words.push_back(checked_int(w.get<long long>(), where, "words") - 1);
    }
    s.genre = checked_int(int_field(js, "genre", where), where, "genre") - 1;
    s.time = checked_int(int_field(js, "time", where), where, "time") - 1;
    if (js.contains("label")) {
      labels.push_back(checked_int(int_field(js, "label", where), where, "label") - 1);
      ++with_label;
    } else if (with_label > 0) {
      throw DataError(where + ": field 'label' missing while earlier snippets have labels");
    }
    if (with_label > 0 && with_label != d + 1)
      throw DataError(where + ": field 'label' present but earlier snippets have none");
    corpus.snippets.push_back(std::move(s));
  }
  if (with_label > 0) {
    if (!corpus.num_true_senses)
      throw DataError("corpus: labels present but field 'num_true_senses' missing");
    corpus.labels = std::move(labels);
  } else if (corpus.num_true_senses) {
    throw DataError("corpus: field 'num_true_senses' given but no snippet has a 'label'");
  }
  corpus.validate();
  return corpus;
}

std::string corpus_to_json_text(const Corpus& corpus) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"vocab_size\": " << corpus.vocab_size << ",\n";
  out << "  \"num_genres\": " << corpus.num_genres << ",\n";
  out << "  \"num_times\": " << corpus.num_times << ",\n";
  if (corpus.has_labels()) out << "  \"num_true_senses\": " << *corpus.num_true_senses << ",\n";
  out << "  \"snippets\": [";
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const Snippet& s = corpus.snippets[d];
    ordered_json js;
    std::vector<int> words(s.words);
    for (int& w : words) ++w;
    js["words"] = words;
    js["genre"] = s.genre + 1;
    js["time"] = s.time + 1;
    if (corpus.has_labels()) js["label"] = (*corpus.labels)[d] + 1;
    out << (d == 0 ? "\n    " : ",\n    ") << js.dump();
  }
  out << (corpus.size() ? "\n  ]\n" : "]\n") << "}\n";
  return out.str();
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return corpus_from_json_text(buffer.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  corpus.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file '" + path.string() + "'");
  out << corpus_to_json_text(corpus);
}

std::vector<Corpus> split_corpus(const Corpus& corpus, int parts, std::uint64_t seed) {
  if (parts < 2) throw std::invalid_argument("split_corpus: parts must be >= 2");
  if (static_cast<std::size_t>(parts) > corpus.size())
    throw std::invalid_argument("split_corpus: more parts than snippets");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(parts));
  for (std::size_t i = 0; i < order.size(); ++i)
    members[i % static_cast<std::size_t>(parts)].push_back(order[i]);

  std::vector<Corpus> out;
  for (auto& idx : members) {
    std::sort(idx.begin(), idx.end());
    Corpus part;
    part.vocab_size = corpus.vocab_size;
    part.num_genres = corpus.num_genres;
    part.num_times = corpus.num_times;
    part.num_true_senses = corpus.num_true_senses;
    std::vector<int> labels;
    for (std::size_t i : idx) {
      part.snippets.push_back(corpus.snippets[i]);
      if (corpus.labels) labels.push_back((*corpus.labels)[i]);
    }
    if (corpus.labels) part.labels = std::move(labels);
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace gbsel
