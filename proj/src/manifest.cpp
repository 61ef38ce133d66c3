#include "manyarm/manifest.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace manyarm::cli {

namespace {

[[noreturn]] void bad_manifest(const std::string& msg) { throw std::invalid_argument(msg); }

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        bad_manifest("manifest: key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        bad_manifest("manifest: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    bad_manifest("manifest: key '" + key + "' expects a boolean, got '" + value + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

bool safe_cell_name(const std::string& name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_' || c == '.';
    });
}

struct LoadedCorpus {
    std::vector<corpus::Session> sessions;
    corpus::EmbeddingTable embeddings;
};

LoadedCorpus load_corpus(const ExperimentManifest& manifest) {
    LoadedCorpus loaded;
    if (manifest.synthetic) {
        auto [sessions, table] = corpus::generate_synthetic(*manifest.synthetic);
        loaded.sessions = std::move(sessions);
        loaded.embeddings = std::move(table);
    } else {
        if (!manifest.log_path || !manifest.embeddings_path)
            bad_manifest("manifest: need 'log' and 'embeddings' paths, or 'synthetic'");
        const auto records = corpus::parse_log(*manifest.log_path);
        loaded.sessions =
            corpus::build_sessions(records, manifest.min_session_len, manifest.max_session_len);
        loaded.embeddings = corpus::load_embeddings(*manifest.embeddings_path);
    }
    corpus::validate_resolvable(loaded.sessions, loaded.embeddings);
    return loaded;
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

selection::KSchedule parse_k_schedule(const std::string& spec) {
    selection::KSchedule sched;
    const auto colon = spec.find(':');
    const std::string kind = trim(spec.substr(0, colon));
    if (kind == "fixed") {
        sched.variant = selection::KSchedule::Variant::fixed;
    } else if (kind == "paper-exact") {
        sched.variant = selection::KSchedule::Variant::paper_exact;
    } else if (kind == "scaled-unimodal") {
        sched.variant = selection::KSchedule::Variant::scaled_unimodal;
    } else if (kind == "anytime") {
        sched.variant = selection::KSchedule::Variant::anytime_beta;
    } else {
        bad_manifest("unknown k schedule '" + kind + "'");
    }

    if (colon == std::string::npos) return sched;
    for (const std::string& part : split(spec.substr(colon + 1), ',')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        std::string key = trim(eq == std::string::npos ? part : part.substr(0, eq));
        std::string value = eq == std::string::npos ? "" : trim(part.substr(eq + 1));
        if (eq == std::string::npos && kind == "fixed") {
            // allow the shorthand "fixed:250"
            value = key;
            key = "kmax";
        }
        if (key == "alpha")
            sched.alpha = to_double(key, value);
        else if (key == "tau")
            sched.tau = to_double(key, value);
        else if (key == "beta")
            sched.beta = to_double(key, value);
        else if (key == "kmax" || key == "k")
            sched.k_max = static_cast<std::size_t>(to_u64(key, value));
        else if (key == "exp") {
            if (value == "half")
                sched.beta_exponent = selection::KSchedule::BetaExponent::half;
            else if (value == "ratio")
                sched.beta_exponent = selection::KSchedule::BetaExponent::ratio;
            else
                bad_manifest("k schedule: exp must be 'half' or 'ratio'");
        } else {
            bad_manifest("k schedule: unknown key '" + key + "'");
        }
    }
    return sched;
}

replay::SelectionStrategy parse_strategy(const std::string& name) {
    if (name == "max-utility") return replay::SelectionStrategy::max_utility;
    if (name == "random-k") return replay::SelectionStrategy::random_k;
    if (name == "zooming") return replay::SelectionStrategy::zooming;
    bad_manifest("unknown strategy '" + name + "'");
}

policies::PolicySpec::Kind parse_policy_kind(const std::string& name) {
    if (name == "linucb") return policies::PolicySpec::Kind::linucb;
    if (name == "linthompsamp") return policies::PolicySpec::Kind::linthompsamp;
    if (name == "random") return policies::PolicySpec::Kind::random;
    if (name == "most-similar") return policies::PolicySpec::Kind::most_similar;
    bad_manifest("unknown policy '" + name + "'");
}

policies::FeatureMap::Variant parse_feature_map(const std::string& name) {
    if (name == "arm-only") return policies::FeatureMap::Variant::arm_only;
    if (name == "concat-hadamard") return policies::FeatureMap::Variant::concat_hadamard;
    bad_manifest("unknown feature map '" + name + "'");
}

selection::UtilityModel::Variant parse_utility_variant(const std::string& name) {
    if (name == "generalized-joint") return selection::UtilityModel::Variant::generalized_joint;
    if (name == "modular-log-marginal")
        return selection::UtilityModel::Variant::modular_log_marginal;
    bad_manifest("unknown utility variant '" + name + "'");
}

namespace {

void apply_cell_key(Cell& cell, const std::string& key, const std::string& value) {
    ReplayConfig& cfg = cell.config;
    if (key == "name") {
        cell.name = value;
    } else if (key == "strategy") {
        cfg.strategy = parse_strategy(value);
    } else if (key == "policy") {
        cfg.policy.kind = parse_policy_kind(value);
    } else if (key == "epsilon") {
        cfg.epsilon = to_double(key, value);
    } else if (key == "k") {
        cfg.schedule = selection::KSchedule{};
        cfg.schedule.variant = selection::KSchedule::Variant::fixed;
        cfg.schedule.k_max = static_cast<std::size_t>(to_u64(key, value));
    } else if (key == "schedule") {
        cfg.schedule = parse_k_schedule(value);
    } else if (key == "alpha-ucb") {
        cfg.policy.alpha_ucb = to_double(key, value);
    } else if (key == "lambda") {
        cfg.policy.lambda = to_double(key, value);
    } else if (key == "v") {
        cfg.policy.v = to_double(key, value);
    } else if (key == "feature-map") {
        cfg.policy.feature_map.variant = parse_feature_map(value);
    } else if (key == "utility") {
        cfg.utility.variant = parse_utility_variant(value);
    } else if (key == "scale") {
        cfg.utility.scale = to_double(key, value);
    } else if (key == "reset-per-session") {
        cfg.reset_per_session = to_bool(key, value);
    } else if (key == "m") {
        cfg.distributed_m = static_cast<std::size_t>(to_u64(key, value));
    } else if (key == "k0") {
        cfg.k0 = static_cast<std::size_t>(to_u64(key, value));
    } else {
        bad_manifest("manifest: unknown cell key '" + key + "'");
    }
}

void apply_global_key(ExperimentManifest& m, const std::string& key, const std::string& value) {
    if (key == "log") {
        m.log_path = value;
    } else if (key == "embeddings") {
        m.embeddings_path = value;
    } else if (key == "synthetic") {
        if (to_bool(key, value) && !m.synthetic) m.synthetic = corpus::SyntheticConfig{};
    } else if (key == "out") {
        m.out_dir = value;
    } else if (key == "stride") {
        m.stride = std::max<std::size_t>(1, to_u64(key, value));
    } else if (key == "jobs") {
        m.jobs = std::max<std::size_t>(1, to_u64(key, value));
    } else if (key == "round-logs") {
        m.round_logs = to_bool(key, value);
    } else if (key == "seeds") {
        m.seeds.clear();
        for (const std::string& s : split(value, ','))
            if (!s.empty()) m.seeds.push_back(to_u64(key, s));
    } else if (key == "min-len") {
        m.min_session_len = to_u64(key, value);
    } else if (key == "max-len") {
        m.max_session_len = to_u64(key, value);
    } else if (key.rfind("synth-", 0) == 0) {
        if (!m.synthetic) m.synthetic = corpus::SyntheticConfig{};
        corpus::SyntheticConfig& syn = *m.synthetic;
        const std::string sub = key.substr(6);
        if (sub == "sessions")
            syn.num_sessions = to_u64(key, value);
        else if (sub == "dim")
            syn.dim = to_u64(key, value);
        else if (sub == "topics")
            syn.num_topics = to_u64(key, value);
        else if (sub == "spread")
            syn.topic_spread = to_double(key, value);
        else if (sub == "noise")
            syn.noise_fraction = to_double(key, value);
        else if (sub == "seed")
            syn.rng_seed = to_u64(key, value);
        else if (sub == "len-min")
            syn.session_length_range.first = to_u64(key, value);
        else if (sub == "len-max")
            syn.session_length_range.second = to_u64(key, value);
        else if (sub == "distractors")
            syn.num_distractors = to_u64(key, value);
        else if (sub == "distractor-scale")
            syn.distractor_spread_scale = to_double(key, value);
        else
            bad_manifest("manifest: unknown synthetic key '" + key + "'");
    } else {
        bad_manifest("manifest: unknown key '" + key + "'");
    }
}

}  // namespace

ExperimentManifest parse_manifest_text(const std::string& text, const std::string& origin) {
    ExperimentManifest manifest;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool in_cell = false;
    Cell cell;

    auto flush_cell = [&]() {
        if (!in_cell) return;
        if (cell.name.empty()) cell.name = "cell" + std::to_string(manifest.cells.size());
        manifest.cells.push_back(cell);
    };

    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t == "[cell]") {
            flush_cell();
            in_cell = true;
            cell = Cell{};
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            bad_manifest(origin + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (in_cell)
                apply_cell_key(cell, key, value);
            else
                apply_global_key(manifest, key, value);
        } catch (const std::invalid_argument& e) {
            bad_manifest(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    flush_cell();
    return manifest;
}

ExperimentManifest parse_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) bad_manifest("cannot open manifest: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest_text(ss.str(), path.string());
}

RunResult run_manifest(const ExperimentManifest& manifest) {
    if (manifest.cells.empty()) bad_manifest("manifest: at least one [cell] is required");
    if (manifest.seeds.empty()) bad_manifest("manifest: seeds must be nonempty");
    for (const Cell& cell : manifest.cells) {
        if (!safe_cell_name(cell.name))
            bad_manifest("manifest: cell name '" + cell.name + "' is not filesystem-safe");
        replay::validate(cell.config);
    }
    {
        std::size_t distinct = 0;
        std::vector<std::string> names;
        for (const Cell& c : manifest.cells) names.push_back(c.name);
        std::sort(names.begin(), names.end());
        distinct = static_cast<std::size_t>(
            std::unique(names.begin(), names.end()) - names.begin());
        if (distinct != manifest.cells.size()) bad_manifest("manifest: duplicate cell names");
    }

    const LoadedCorpus loaded = load_corpus(manifest);
    if (loaded.sessions.empty()) throw std::runtime_error("corpus has no usable sessions");

    std::filesystem::create_directories(manifest.out_dir);

    struct Job {
        std::size_t cell = 0;
        std::size_t seed = 0;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < manifest.cells.size(); ++c)
        for (std::size_t s = 0; s < manifest.seeds.size(); ++s) jobs.push_back({c, s});

    RunResult result;
    result.summary.resize(jobs.size());
    std::vector<std::filesystem::path> files(jobs.size());
    std::vector<std::filesystem::path> logs(jobs.size());

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (error) return;
            }
            try {
                const Cell& cell = manifest.cells[jobs[i].cell];
                const std::uint64_t seed = manifest.seeds[jobs[i].seed];
                ReplayConfig cfg = cell.config;
                cfg.rng_seed = seed;
                const replay::ReplayOutcome outcome =
                    replay::replay_corpus(loaded.sessions, cfg, loaded.embeddings);

                std::ostringstream csv;
                csv << "t,cum_regret,per_round_regret\n";
                const std::size_t n = outcome.rounds.size();
                for (std::size_t r = 0; r < n; ++r) {
                    if ((r + 1) % manifest.stride != 0 && r + 1 != n) continue;
                    csv << outcome.rounds[r].t << ',' << format_double(outcome.cumulative_regret[r])
                        << ',' << format_double(outcome.per_round_regret[r]) << '\n';
                }
                const auto file =
                    manifest.out_dir / (cell.name + "_seed" + std::to_string(seed) + ".csv");
                write_atomically(file, csv.str());
                files[i] = file;

                if (manifest.round_logs) {
                    const auto log_file = manifest.out_dir /
                                          (cell.name + "_seed" + std::to_string(seed) + "_rounds.csv");
                    replay::write_round_log(log_file, outcome.rounds);
                    logs[i] = log_file;
                }

                RunSummaryRow row;
                row.cell = cell.name;
                row.seed = seed;
                row.horizon = outcome.horizon();
                row.final_regret = outcome.final_regret();
                row.final_per_round_regret = outcome.final_per_round_regret();
                result.summary[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_workers = std::min(manifest.jobs, jobs.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (error) std::rethrow_exception(error);

    std::ostringstream summary;
    summary << "cell,seed,T,final_R,final_R_over_T\n";
    for (const RunSummaryRow& row : result.summary)
        summary << row.cell << ',' << row.seed << ',' << row.horizon << ','
                << format_double(row.final_regret) << ','
                << format_double(row.final_per_round_regret) << '\n';
    const auto summary_path = manifest.out_dir / "summary.csv";
    write_atomically(summary_path, summary.str());

    for (const auto& f : files)
        if (!f.empty()) result.files_written.push_back(f);
    for (const auto& f : logs)
        if (!f.empty()) result.files_written.push_back(f);
    result.files_written.push_back(summary_path);
    return result;
}

int stats_command(const ExperimentManifest& manifest, std::ostream& out) {
    if (manifest.synthetic) {
        auto [sessions, table] = corpus::generate_synthetic(*manifest.synthetic);
        std::size_t queries = 0;
        for (const auto& s : sessions) queries += s.length();
        out << "queries (sessions):        " << queries << "\n"
            << "sessions:                  " << sessions.size() << "\n"
            << "pool arms:                 " << table.size() << "\n"
            << "mean queries/session:      "
            << (sessions.empty() ? 0.0
                                 : static_cast<double>(queries) /
                                       static_cast<double>(sessions.size()))
            << "\n";
        return 0;
    }
    if (!manifest.log_path) bad_manifest("stats: need 'log' path or synthetic corpus");
    const auto records = corpus::parse_log(*manifest.log_path);
    const auto sessions =
        corpus::build_sessions(records, manifest.min_session_len, manifest.max_session_len);
    const corpus::CorpusStats st = corpus::corpus_stats(records, sessions);
    out << "queries (raw):             " << st.total_queries << "\n"
        << "sessions (raw):            " << st.total_sessions << "\n"
        << "retained queries:          " << st.retained_queries << "\n"
        << "retained sessions:         " << st.retained_sessions << "\n"
        << "mean queries/session raw:  " << format_double(st.mean_session_length_before) << "\n"
        << "mean queries/session:      " << format_double(st.mean_session_length_after) << "\n";
    return 0;
}

}  // namespace manyarm::cli
