#pragma once

// File formats. Ids and indices are 1-based on disk. Doubles are written in
// shortest round-trip decimal form.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gbsel/data.hpp"
#include "gbsel/eval.hpp"
#include "gbsel/ppc.hpp"
#include "gbsel/sampler.hpp"
#include "gbsel/selector.hpp"

namespace gbsel {

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const McmcConfig& c);
nlohmann::ordered_json to_json(const GeneratorConfig& c);

/// Overlay the fields present in `j` onto `c`; unknown keys are a ConfigError.
void update_from_json(ModelConfig& c, const nlohmann::json& j);
void update_from_json(McmcConfig& c, const nlohmann::json& j);
void update_from_json(GeneratorConfig& c, const nlohmann::json& j);

/// Draws file: a JSON-lines header record followed by one record per draw.
void save_draws(const PosteriorDraws& draws, const std::filesystem::path& path);
PosteriorDraws load_draws(const std::filesystem::path& path);

void save_truth(const SyntheticTruth& truth, const std::filesystem::path& path);

nlohmann::ordered_json to_json(const PpcResult& r);
void save_ppc_json(const PpcResult& r, const std::filesystem::path& path);
PpcResult load_ppc_json(const std::filesystem::path& path);
/// Columns: draw_index, ref_diagnostic, observed_at_draw.
void save_ppc_csv(const PpcResult& r, const std::filesystem::path& path);

/// `timestamp`, when given, goes into a trailing "metadata" block.
nlohmann::ordered_json to_json(const LambdaReport& r,
                               const std::optional<std::string>& timestamp = std::nullopt);
LambdaReport report_from_json(const nlohmann::json& j);
void save_report_json(const LambdaReport& r, const std::filesystem::path& path,
                      const std::optional<std::string>& timestamp = std::nullopt);
LambdaReport load_report_json(const std::filesystem::path& path);
/// Columns: lambda, p_mean, p_paired, p_avg, brier, collapsed, selected.
std::string report_csv(const LambdaReport& r);

nlohmann::ordered_json to_json(const EvalReport& r);
/// Columns: snippet, sense_1..sense_K'.
std::string per_snippet_csv(const EvalReport& r);
/// Columns: sense, rank, word_id, probability.
std::string top_words_csv(const EvalReport& r);
/// Columns: genre, time, sense, mean, hpd_lo, hpd_hi.
std::string prevalence_csv(const EvalReport& r, const Dims& dims);

/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);
std::string csv_number(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace gbsel
