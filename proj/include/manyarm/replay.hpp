#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manyarm/corpus.hpp"
#include "manyarm/policies.hpp"
#include "manyarm/selection.hpp"

namespace manyarm::replay {

using corpus::EmbeddingTable;
using corpus::QueryId;
using corpus::Session;

enum class SelectionStrategy { max_utility, random_k, zooming };

struct ReplayConfig {
    double epsilon = 0.5;
    selection::KSchedule schedule;
    selection::UtilityModel utility;
    SelectionStrategy strategy = SelectionStrategy::max_utility;
    policies::PolicySpec policy;
    std::uint64_t rng_seed = 1;
    bool reset_per_session = false;
    std::size_t distributed_m = 1;          // Alg.-3 partition count
    std::optional<std::size_t> k0;          // initial candidate size; default k_schedule(1)
};

// random_k requires a fixed-k schedule; throws otherwise.
void validate(const ReplayConfig& cfg);

struct RoundLog {
    std::size_t t = 0;                      // global round index, 1-based
    std::string session_id;
    QueryId current_arm = 0;
    QueryId recommended = 0;
    int reward = 0;                         // 0 or 1
    std::size_t candidate_size = 0;
};

struct ReplayOutcome {
    std::vector<RoundLog> rounds;
    std::vector<double> cumulative_regret;  // R(t) = t - sum of rewards
    std::vector<double> per_round_regret;   // R(t) / t

    std::size_t horizon() const { return rounds.size(); }
    double final_regret() const { return cumulative_regret.empty() ? 0.0 : cumulative_regret.back(); }
    double final_per_round_regret() const {
        return per_round_regret.empty() ? 0.0 : per_round_regret.back();
    }
};

// Uniform k-subset of the pool without replacement; throws when k > |pool|.
std::vector<QueryId> random_k_candidates(std::span<const QueryId> pool, std::size_t k, Rng& rng);

// Replays one session: the current arm starts at the session's first query;
// each round the policy recommends one arm, rewarded when the recommendation
// matches a not-yet-consumed later query of the session. On a hit the match
// is consumed and becomes the current arm; on a miss the user advances to the
// next logged query. Exactly length-1 rounds.
std::vector<RoundLog> replay_session(const Session& session, const ReplayConfig& cfg,
                                     const EmbeddingTable& embeddings,
                                     std::span<const QueryId> pool, policies::Policy& policy,
                                     Rng& rng, std::size_t t_offset,
                                     std::size_t* k_floor = nullptr);

// Sessions in corpus order under one global round counter; policy state is
// carried across sessions unless cfg.reset_per_session.
ReplayOutcome replay_corpus(std::span<const Session> sessions, const ReplayConfig& cfg,
                            const EmbeddingTable& embeddings);

void write_round_log(const std::filesystem::path& path, std::span<const RoundLog> rounds);

}  // namespace manyarm::replay
