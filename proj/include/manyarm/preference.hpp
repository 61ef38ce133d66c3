#pragma once

#include <span>
#include <vector>

#include "manyarm/corpus.hpp"

namespace manyarm::preference {

using corpus::EmbeddingTable;
using corpus::QueryId;

// Similarity scores of every other arm against the currently playing arm.
// Scores are raw cosine values in [-1, 1]; negative values are clamped to 0
// when masses and weights are computed.
struct SimilarityRow {
    QueryId current_arm = 0;
    std::vector<QueryId> arms;    // A' = A \ {current_arm}, pool order
    std::vector<double> scores;   // aligned with arms

    std::size_t size() const { return arms.size(); }
};

// Threshold split of A' with its similarity masses. mass_above is the
// fraction of total (clamped) similarity mass lying at or above epsilon.
struct Partition {
    double epsilon = 0.0;
    std::vector<bool> in_above;   // aligned with the row's arms
    std::size_t count_above = 0;
    std::size_t count_below = 0;
    double sum_above = 0.0;       // clamped similarity sums per side
    double sum_below = 0.0;
    double mass_above = 0.0;      // pi
    double mass_below = 0.0;      // pi_bar
};

// Per-arm within-partition weights. Both families are defined for every arm
// (each arm's clamped similarity over the side's total), so weights for arms
// outside the matching side can exceed 1. A family is all-zero when its side
// carries no mass.
struct PreferenceWeights {
    std::vector<double> above;    // s_{j,i}(eps)
    std::vector<double> below;    // s_bar_{j,i}(eps)
};

// Row + partition + weights for one current arm; the unit every selection
// and policy-scoring step works against.
struct Context {
    SimilarityRow row;
    Partition part;
    PreferenceWeights weights;

    std::size_t size() const { return row.size(); }
};

// u.v / (|u||v|). Throws on dimension mismatch or zero vectors.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Scores of every pool arm against current_arm; current_arm itself is
// excluded. Rows for distinct current arms are independent and safe to
// compute in parallel.
SimilarityRow similarity_row(const EmbeddingTable& table, QueryId current_arm,
                             std::span<const QueryId> pool);

// Throws when every clamped score is zero (masses undefined).
Partition make_partition(const SimilarityRow& row, double epsilon);

PreferenceWeights make_weights(const SimilarityRow& row, const Partition& part);

Context build_context(const EmbeddingTable& table, QueryId current_arm,
                      std::span<const QueryId> pool, double epsilon);

// For tests and score-level callers: build from explicit similarity scores.
Context build_context_from_scores(QueryId current_arm, std::vector<QueryId> arms,
                                  std::vector<double> scores, double epsilon);

// Pairwise joint selection probability. j and k are indices into the row's
// arms; symmetric in (j, k); throws when j == k.
double joint_probability(const Partition& part, const PreferenceWeights& weights,
                         std::size_t j, std::size_t k);

// Marginal selection probability with indicator support, so the values form
// a distribution over A'.
double marginal_probability(const Partition& part, const PreferenceWeights& weights,
                            std::size_t j);

// Joint probability of a whole candidate set:
//   g(C) = (pi^|C| prod_j s_j + pi_bar^|C| prod_j s_bar_j) / (pi^|C| + pi_bar^|C|).
// Reduces to joint_probability for |C| = 2. Throws on empty C.
double set_probability(const Partition& part, const PreferenceWeights& weights,
                       std::span<const std::size_t> members);

// log g(C), evaluated in log space; -inf when any member carries zero weight
// on every side with mass. Large sets underflow set_probability but not this.
double log_set_probability(const Partition& part, const PreferenceWeights& weights,
                           std::span<const std::size_t> members);

}  // namespace manyarm::preference
