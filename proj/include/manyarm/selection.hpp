#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "manyarm/preference.hpp"

namespace manyarm::selection {

using corpus::QueryId;
using preference::Context;

struct UtilityModel {
    enum class Variant { generalized_joint, modular_log_marginal };
    Variant variant = Variant::generalized_joint;
    double scale = 1.0;  // c > 0; scales utilities, never changes the argmax
};

// Greedy-ordered candidate subset with the utility value after each insertion.
struct CandidateSet {
    QueryId current_arm = 0;
    double epsilon = 0.0;
    std::vector<QueryId> members;              // insertion order
    std::vector<std::size_t> member_indices;   // positions in the originating context
    std::vector<double> utility_trace;         // aligned with members
};

// Candidate-set-size rule k_t.
struct KSchedule {
    enum class Variant { paper_exact, scaled_unimodal, anytime_beta, fixed };
    enum class BetaExponent { half, ratio };   // t^(beta/2) vs t^(beta/(beta+2))

    Variant variant = Variant::scaled_unimodal;
    double alpha = 2.0;                        // >= 1
    double tau = 50.0;                         // > 0; scaled_unimodal peaks at t = alpha*tau
    double beta = 1.0;                         // in (0, 2]
    BetaExponent beta_exponent = BetaExponent::ratio;
    std::size_t k_max = 250;
};

std::size_t k_schedule(const KSchedule& sched, std::size_t t);

struct GreedyStats {
    std::size_t gain_evaluations = 0;
};

struct DistributedTrace {
    double best_partition_utility = 0.0;  // util(P_max)
    double merged_utility = 0.0;          // util(P_B)
};

// c * log g(C) for generalized_joint, c * sum of log marginals for
// modular_log_marginal. -inf when a member carries zero clamped similarity.
double utility(const Context& ctx, const UtilityModel& model,
               std::span<const std::size_t> members);

// Plain greedy: repeatedly appends the arm with maximal utility gain (ties by
// lowest query_id) until |C| = k_target or no arm with positive preference
// mass remains. Extends the given set in place.
void greedy_extend(const Context& ctx, const UtilityModel& model, CandidateSet& cand,
                   std::size_t k_target, GreedyStats* stats = nullptr);

// Exact greedy with a max-heap of static per-arm gain upper bounds; only heap
// heads are re-scored. Produces the same member sequence as greedy_extend
// from empty, with fewer gain evaluations.
CandidateSet lazy_greedy(const Context& ctx, const UtilityModel& model, std::size_t k,
                         GreedyStats* stats = nullptr);

// Same, restricted to a subset of the context's arms.
CandidateSet lazy_greedy_pool(const Context& ctx, const UtilityModel& model,
                              std::span<const std::size_t> pool, std::size_t k,
                              GreedyStats* stats = nullptr);

// Partition the pool into m seeded-random sets, greedy per set, then greedy
// over the union of the per-set solutions; returns the better of the best
// per-set solution and the merged-pass solution. m = 1 degenerates to
// lazy_greedy. Throws when m > pool size or m = 0.
CandidateSet distributed_greedy(const Context& ctx, const UtilityModel& model, std::size_t k,
                                std::size_t m, std::uint64_t partition_seed,
                                DistributedTrace* trace = nullptr,
                                GreedyStats* stats = nullptr);

// Alg.-1-line-1 entry point: initial candidate set via distributed greedy.
CandidateSet initialize_candidates(const Context& ctx, const UtilityModel& model,
                                   std::size_t k0, std::size_t m,
                                   std::uint64_t partition_seed);

}  // namespace manyarm::selection
