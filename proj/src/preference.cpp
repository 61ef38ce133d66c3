#include "manyarm/preference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace manyarm::preference {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0)
        throw std::invalid_argument("cosine_similarity: zero vector has no direction");
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

SimilarityRow similarity_row(const EmbeddingTable& table, QueryId current_arm,
                             std::span<const QueryId> pool) {
    const double* cur = table.vector(current_arm);
    const double cur_norm = table.norm(current_arm);
    if (cur_norm == 0.0)
        throw std::invalid_argument("similarity_row: current arm has zero vector");
    const std::size_t d = table.dim();

    SimilarityRow row;
    row.current_arm = current_arm;
    row.arms.reserve(pool.size());
    row.scores.reserve(pool.size());
    for (QueryId id : pool) {
        if (id == current_arm) continue;
        const double* v = table.vector(id);
        const double n = table.norm(id);
        if (n == 0.0)
            throw std::invalid_argument("similarity_row: arm " + std::to_string(id) +
                                        " has zero vector");
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += cur[i] * v[i];
        row.arms.push_back(id);
        row.scores.push_back(std::clamp(dot / (cur_norm * n), -1.0, 1.0));
    }
    return row;
}

Partition make_partition(const SimilarityRow& row, double epsilon) {
    if (!std::isfinite(epsilon))
        throw std::invalid_argument("make_partition: epsilon must be finite");

    Partition part;
    part.epsilon = epsilon;
    part.in_above.resize(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double s = std::max(row.scores[i], 0.0);
        const bool above = s >= epsilon;
        part.in_above[i] = above;
        if (above) {
            ++part.count_above;
            part.sum_above += s;
        } else {
            ++part.count_below;
            part.sum_below += s;
        }
    }
    const double total = part.sum_above + part.sum_below;
    if (total <= 0.0)
        throw std::runtime_error(
            "make_partition: all similarity scores are non-positive, masses undefined");
    part.mass_above = part.sum_above / total;
    part.mass_below = part.sum_below / total;
    return part;
}

PreferenceWeights make_weights(const SimilarityRow& row, const Partition& part) {
    PreferenceWeights w;
    w.above.resize(row.size(), 0.0);
    w.below.resize(row.size(), 0.0);
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double s = std::max(row.scores[i], 0.0);
        if (part.sum_above > 0.0) w.above[i] = s / part.sum_above;
        if (part.sum_below > 0.0) w.below[i] = s / part.sum_below;
    }
    return w;
}

Context build_context(const EmbeddingTable& table, QueryId current_arm,
                      std::span<const QueryId> pool, double epsilon) {
    Context ctx;
    ctx.row = similarity_row(table, current_arm, pool);
    ctx.part = make_partition(ctx.row, epsilon);
    ctx.weights = make_weights(ctx.row, ctx.part);
    return ctx;
}

Context build_context_from_scores(QueryId current_arm, std::vector<QueryId> arms,
                                  std::vector<double> scores, double epsilon) {
    if (arms.size() != scores.size())
        throw std::invalid_argument("build_context_from_scores: arms/scores size mismatch");
    Context ctx;
    ctx.row.current_arm = current_arm;
    ctx.row.arms = std::move(arms);
    ctx.row.scores = std::move(scores);
    ctx.part = make_partition(ctx.row, epsilon);
    ctx.weights = make_weights(ctx.row, ctx.part);
    return ctx;
}

double joint_probability(const Partition& part, const PreferenceWeights& weights,
                         std::size_t j, std::size_t k) {
    if (j == k)
        throw std::invalid_argument("joint_probability: arms must be distinct");
    const double pi2 = part.mass_above * part.mass_above;
    const double pibar2 = part.mass_below * part.mass_below;
    // Weight products first: IEEE multiplication commutes, so the result is
    // exactly symmetric in (j, k).
    return (pi2 * (weights.above[j] * weights.above[k]) +
            pibar2 * (weights.below[j] * weights.below[k])) /
           (pi2 + pibar2);
}

double marginal_probability(const Partition& part, const PreferenceWeights& weights,
                            std::size_t j) {
    const double pi2 = part.mass_above * part.mass_above;
    const double pibar2 = part.mass_below * part.mass_below;
    const double num = part.in_above[j] ? pi2 * weights.above[j] : pibar2 * weights.below[j];
    return num / (pi2 + pibar2);
}

double log_set_probability(const Partition& part, const PreferenceWeights& weights,
                           std::span<const std::size_t> members) {
    if (members.empty())
        throw std::invalid_argument("set_probability: empty candidate set");

    const double log_pi = part.mass_above > 0.0 ? std::log(part.mass_above) : kNegInf;
    const double log_pibar = part.mass_below > 0.0 ? std::log(part.mass_below) : kNegInf;
    const double n = static_cast<double>(members.size());

    double log_prod_above = part.mass_above > 0.0 ? 0.0 : kNegInf;
    double log_prod_below = part.mass_below > 0.0 ? 0.0 : kNegInf;
    for (std::size_t j : members) {
        if (log_prod_above != kNegInf)
            log_prod_above += weights.above[j] > 0.0 ? std::log(weights.above[j]) : kNegInf;
        if (log_prod_below != kNegInf)
            log_prod_below += weights.below[j] > 0.0 ? std::log(weights.below[j]) : kNegInf;
    }

    const double numer = log_sum_exp(n * log_pi + log_prod_above, n * log_pibar + log_prod_below);
    const double denom = log_sum_exp(n * log_pi, n * log_pibar);
    return numer - denom;
}

double set_probability(const Partition& part, const PreferenceWeights& weights,
                       std::span<const std::size_t> members) {
    return std::exp(log_set_probability(part, weights, members));
}

}  // namespace manyarm::preference
