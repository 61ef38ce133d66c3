#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "manyarm/replay.hpp"

namespace manyarm::cli {

using replay::ReplayConfig;

// One strategy/policy/hyperparameter combination.
struct Cell {
    std::string name;
    ReplayConfig config;
};

// Corpus source plus the grid of cells and seeds to run.
struct ExperimentManifest {
    std::optional<std::filesystem::path> log_path;
    std::optional<std::filesystem::path> embeddings_path;
    std::optional<corpus::SyntheticConfig> synthetic;
    std::vector<Cell> cells;
    std::vector<std::uint64_t> seeds{1};
    std::filesystem::path out_dir = "results";
    std::size_t stride = 1;          // curve decimation; the final round is always kept
    std::size_t jobs = 1;
    bool round_logs = false;
    std::size_t min_session_len = 4;
    std::size_t max_session_len = 50;
};

// Flat key-value manifest with repeated [cell] blocks. Keys outside a block
// configure the corpus and runner; keys inside configure that cell. Lines
// starting with '#' are comments.
ExperimentManifest parse_manifest(const std::filesystem::path& path);
ExperimentManifest parse_manifest_text(const std::string& text, const std::string& origin);

// "fixed:250", "paper-exact:alpha=2,kmax=250",
// "scaled-unimodal:alpha=2,tau=50,kmax=250",
// "anytime:beta=1,exp=ratio,kmax=250".
selection::KSchedule parse_k_schedule(const std::string& spec);

replay::SelectionStrategy parse_strategy(const std::string& name);
policies::PolicySpec::Kind parse_policy_kind(const std::string& name);
policies::FeatureMap::Variant parse_feature_map(const std::string& name);
selection::UtilityModel::Variant parse_utility_variant(const std::string& name);

struct RunSummaryRow {
    std::string cell;
    std::uint64_t seed = 0;
    std::size_t horizon = 0;
    double final_regret = 0.0;
    double final_per_round_regret = 0.0;
};

struct RunResult {
    std::vector<RunSummaryRow> summary;
    std::vector<std::filesystem::path> files_written;
};

// Runs every cell x seed in a thread pool, writes one regret-curve CSV per
// job plus summary.csv; all files written atomically (temp + rename).
// Returns the summary rows in deterministic (cell, seed) order.
RunResult run_manifest(const ExperimentManifest& manifest);

// Loads (or synthesizes) the corpus and prints ingest statistics.
int stats_command(const ExperimentManifest& manifest, std::ostream& out);

}  // namespace manyarm::cli
