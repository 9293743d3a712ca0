#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "palign/alignment.hpp"
#include "palign/dataset.hpp"
#include "palign/encoders.hpp"
#include "palign/retrieval.hpp"

namespace palign::cli {

struct EvalConfig {
    std::vector<retrieval::Direction> directions{retrieval::kAllDirections,
                                                 retrieval::kAllDirections + 4};
    std::size_t class_head_templates = 64;
};

struct Paths {
    std::string corpus;
    std::string checkpoint;
    std::string report;
};

/// Whole-run configuration. Every field has a default, so `{}` is a valid
/// config document; unknown keys are rejected with the offending name.
/// All subsystem randomness derives from the single `seed` via labeled
/// splits (corpus / model / train).
struct RunConfig {
    dataset::CorpusConfig corpus;
    encoders::ModelConfig model;
    alignment::ContrastiveConfig train;
    EvalConfig eval;
    Paths paths;
    std::uint64_t seed = 0;

    std::uint64_t corpus_seed() const;
    std::uint64_t model_seed() const;
    std::uint64_t train_seed() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

/// Loss-trace report; deliberately excludes wall-clock time so identical
/// (config, seed) runs write identical bytes.
nlohmann::ordered_json train_report_to_json(const alignment::TrainReport& report,
                                            const RunConfig& cfg);

struct EvalSummary {
    std::vector<std::pair<std::string, double>> map_by_direction;
    double zero_shot_accuracy = 0.0;
    std::vector<double> per_category_accuracy;
    std::string checkpoint_sha256;
};

nlohmann::ordered_json eval_summary_to_json(const EvalSummary& summary, const RunConfig& cfg);

void write_json(const nlohmann::ordered_json& doc, const std::filesystem::path& path);

} // namespace palign::cli
