#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "manyarm/manifest.hpp"

namespace {

using manyarm::cli::ExperimentManifest;

struct CorpusFlags {
    std::string log;
    std::string embeddings;
    bool synthetic = false;
    std::size_t synth_sessions = 500;
    std::size_t synth_topics = 10;
    std::size_t synth_dim = 16;
    double synth_spread = 0.15;
    double synth_noise = 0.05;
    std::size_t synth_len_min = 4;
    std::size_t synth_len_max = 12;
    std::size_t synth_distractors = 5000;
    std::uint64_t synth_seed = 1;
};

void add_corpus_flags(CLI::App* cmd, CorpusFlags& flags) {
    cmd->add_option("--log", flags.log, "session log file (tsv)");
    cmd->add_option("--embeddings", flags.embeddings, "embedding file (text or EMB1 binary)");
    cmd->add_flag("--synthetic", flags.synthetic, "use the synthetic clustered corpus");
    cmd->add_option("--synth-sessions", flags.synth_sessions, "synthetic: number of sessions");
    cmd->add_option("--synth-topics", flags.synth_topics, "synthetic: number of topics");
    cmd->add_option("--synth-dim", flags.synth_dim, "synthetic: embedding dimension");
    cmd->add_option("--synth-spread", flags.synth_spread, "synthetic: within-topic std-dev");
    cmd->add_option("--synth-noise", flags.synth_noise, "synthetic: off-topic fraction");
    cmd->add_option("--synth-len-min", flags.synth_len_min, "synthetic: min session length");
    cmd->add_option("--synth-len-max", flags.synth_len_max, "synthetic: max session length");
    cmd->add_option("--synth-distractors", flags.synth_distractors,
                    "synthetic: pool-only distractor arms");
    cmd->add_option("--synth-seed", flags.synth_seed, "synthetic: generator seed");
}

void apply_corpus_flags(ExperimentManifest& manifest, const CorpusFlags& flags) {
    if (!flags.log.empty()) manifest.log_path = flags.log;
    if (!flags.embeddings.empty()) manifest.embeddings_path = flags.embeddings;
    if (flags.synthetic) {
        manyarm::corpus::SyntheticConfig syn;
        syn.num_sessions = flags.synth_sessions;
        syn.num_topics = flags.synth_topics;
        syn.dim = flags.synth_dim;
        syn.topic_spread = flags.synth_spread;
        syn.noise_fraction = flags.synth_noise;
        syn.session_length_range = {flags.synth_len_min, flags.synth_len_max};
        syn.num_distractors = flags.synth_distractors;
        syn.rng_seed = flags.synth_seed;
        manifest.synthetic = syn;
    }
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MANYARM_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring non-numeric MANYARM_SEED\n";
        }
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"max-utility candidate selection for countably many-armed bandits"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run = app.add_subcommand("run", "replay experiments and write regret CSVs");
    CorpusFlags run_corpus;
    add_corpus_flags(run, run_corpus);
    std::string manifest_path;
    std::string strategy = "max-utility";
    std::string policy = "linucb";
    std::string feature_map = "concat-hadamard";
    std::string utility = "generalized-joint";
    std::string k_schedule_spec;
    std::string out_dir = "results";
    std::string cell_name;
    double epsilon = 0.5;
    double alpha_ucb = 1.0;
    double lambda = 1.0;
    double v = 0.25;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t k = 0;
    std::size_t k0 = 0;
    std::size_t m = 1;
    std::size_t stride = 1;
    std::size_t jobs = 1;
    bool reset_per_session = false;
    bool round_logs = false;

    run->add_option("--manifest", manifest_path, "manifest file with [cell] blocks");
    run->add_option("--strategy", strategy, "max-utility | random-k | zooming");
    run->add_option("--policy", policy, "linucb | linthompsamp | random | most-similar");
    run->add_option("--epsilon", epsilon, "similarity threshold");
    run->add_option("--k", k, "fixed candidate set size");
    run->add_option("--k-schedule", k_schedule_spec,
                    "schedule spec, e.g. scaled-unimodal:alpha=2,tau=50,kmax=250");
    run->add_option("--alpha-ucb", alpha_ucb, "LinUCB exploration width");
    run->add_option("--lambda", lambda, "LinUCB ridge constant");
    run->add_option("--v", v, "LinThompSamp sampling scale");
    run->add_option("--feature-map", feature_map, "arm-only | concat-hadamard");
    run->add_option("--utility", utility, "generalized-joint | modular-log-marginal");
    run->add_flag("--reset-per-session", reset_per_session, "reset policy state per session");
    run->add_option("--k0", k0, "initial candidate size (default: schedule at t=1)");
    run->add_option("--m", m, "distributed greedy partitions");
    run->add_option("--seed", [&](const CLI::results_t& res) {
        seed = std::stoull(res[0]);
        seed_given = true;
        return true;
    }, "replay seed (fallback: MANYARM_SEED, then 1)");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--stride", stride, "curve decimation stride");
    run->add_option("--jobs", jobs, "parallel jobs for cells x seeds");
    run->add_flag("--round-logs", round_logs, "also write per-round logs");
    run->add_option("--name", cell_name, "cell name for single-run output files");

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "print corpus statistics");
    CorpusFlags stats_corpus;
    add_corpus_flags(stats, stats_corpus);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            ExperimentManifest manifest;
            if (!manifest_path.empty()) {
                manifest = manyarm::cli::parse_manifest(manifest_path);
            } else {
                manyarm::cli::Cell cell;
                cell.name = cell_name.empty() ? strategy + "-" + policy : cell_name;
                cell.config.strategy = manyarm::cli::parse_strategy(strategy);
                cell.config.policy.kind = manyarm::cli::parse_policy_kind(policy);
                cell.config.policy.alpha_ucb = alpha_ucb;
                cell.config.policy.lambda = lambda;
                cell.config.policy.v = v;
                cell.config.policy.feature_map.variant =
                    manyarm::cli::parse_feature_map(feature_map);
                cell.config.utility.variant = manyarm::cli::parse_utility_variant(utility);
                cell.config.epsilon = epsilon;
                cell.config.reset_per_session = reset_per_session;
                cell.config.distributed_m = m;
                if (k0 > 0) cell.config.k0 = k0;
                if (k > 0) {
                    cell.config.schedule.variant =
                        manyarm::selection::KSchedule::Variant::fixed;
                    cell.config.schedule.k_max = k;
                } else if (!k_schedule_spec.empty()) {
                    cell.config.schedule = manyarm::cli::parse_k_schedule(k_schedule_spec);
                }
                manifest.cells.push_back(std::move(cell));
                manifest.seeds = {seed_given ? seed : default_seed()};
            }
            apply_corpus_flags(manifest, run_corpus);
            if (run->count("--out") || manifest_path.empty()) manifest.out_dir = out_dir;
            if (run->count("--stride")) manifest.stride = stride;
            if (run->count("--jobs")) manifest.jobs = jobs;
            if (round_logs) manifest.round_logs = true;

            const auto result = manyarm::cli::run_manifest(manifest);
            std::cout << "wrote " << result.files_written.size() << " files to "
                      << manifest.out_dir.string() << "\n";
            return 0;
        }
        if (stats->parsed()) {
            ExperimentManifest manifest;
            apply_corpus_flags(manifest, stats_corpus);
            return manyarm::cli::stats_command(manifest, std::cout);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
