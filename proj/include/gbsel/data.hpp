#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gbsel/model.hpp"

namespace gbsel {

enum class Misspecification { none, burstiness, duplication };

struct GeneratorConfig {
  int num_snippets = 200;  // D
  int vocab_size = 50;     // V
  int num_genres = 1;      // G
  int num_times = 1;       // T
  int num_senses = 2;      // K'
  int snippet_length = 14; // L
  double sd_phi = 1.0;     // true sense-prevalence logits ~ N(0, sd_phi^2)
  double sd_psi = 1.0;     // true sense-word logits ~ N(0, sd_psi^2)
  Misspecification misspecification = Misspecification::none;
  int burst_words = 4;     // m, distinct source words per bursty snippet
  int copies = 2;          // c, copies per base snippet
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticTruth {
  ProbParams probs;
  std::vector<int> labels;
  GeneratorConfig config;
};

struct SyntheticData {
  Corpus corpus;
  SyntheticTruth truth;
};

/// Draws true parameters, then snippets. Covariates are assigned round-robin
/// over (genre, time) cells.
SyntheticData generate_synthetic(const GeneratorConfig& config);

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Corpus JSON document, 1-based ids. Throws DataError with the snippet index
/// and field on schema violations.
Corpus corpus_from_json_text(const std::string& text);
std::string corpus_to_json_text(const Corpus& corpus);

/// Random partition into `parts` corpora whose sizes differ by at most one.
std::vector<Corpus> split_corpus(const Corpus& corpus, int parts, std::uint64_t seed);

std::string to_string(Misspecification m);
Misspecification misspecification_from_string(const std::string& s);

}  // namespace gbsel
