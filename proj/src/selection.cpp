#include "manyarm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <queue>
#include <stdexcept>

#include "manyarm/rng.hpp"

namespace manyarm::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = static_cast<std::size_t>(-1);

double log_sum_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

void check_model(const UtilityModel& model) {
    if (!(model.scale > 0.0))
        throw std::invalid_argument("utility model: scale constant must be positive");
}

// Incremental gain state shared by the plain and lazy greedy paths. Selection
// works on raw linear scores (log is monotone), so both paths compare the
// exact same doubles and tie-break identically.
class GainScorer {
public:
    GainScorer(const Context& ctx, UtilityModel::Variant variant) : ctx_(ctx), variant_(variant) {
        log_pi_ = safe_log(ctx.part.mass_above);
        log_pibar_ = safe_log(ctx.part.mass_below);
        if (variant_ == UtilityModel::Variant::modular_log_marginal) {
            marginals_.resize(ctx.size());
            for (std::size_t i = 0; i < ctx.size(); ++i)
                marginals_[i] = preference::marginal_probability(ctx.part, ctx.weights, i);
        }
        refresh_lambda();
    }

    // Raw selection score of adding arm e next: order-equivalent to the
    // utility gain. Zero means the arm is never selectable.
    double score(std::size_t e) const {
        if (variant_ == UtilityModel::Variant::modular_log_marginal) return marginals_[e];
        return lambda_ * ctx_.weights.above[e] + (1.0 - lambda_) * ctx_.weights.below[e];
    }

    // Static upper bound on score(e) valid at every greedy step.
    double upper_bound(std::size_t e) const {
        if (variant_ == UtilityModel::Variant::modular_log_marginal) return marginals_[e];
        return std::max(ctx_.weights.above[e], ctx_.weights.below[e]);
    }

    void push(std::size_t e) {
        if (variant_ == UtilityModel::Variant::modular_log_marginal) {
            log_sum_ += safe_log(marginals_[e]);
        } else {
            log_prod_above_ += safe_log(ctx_.weights.above[e]);
            log_prod_below_ += safe_log(ctx_.weights.below[e]);
        }
        ++count_;
        refresh_lambda();
    }

    // Utility of the pushed members; bitwise-identical to utility() on the
    // same member sequence.
    double current_utility(double scale) const {
        if (variant_ == UtilityModel::Variant::modular_log_marginal) return scale * log_sum_;
        const double n = static_cast<double>(count_);
        const double numer =
            log_sum_exp(n * log_pi_ + log_prod_above_, n * log_pibar_ + log_prod_below_);
        const double denom = log_sum_exp(n * log_pi_, n * log_pibar_);
        return scale * (numer - denom);
    }

private:
    void refresh_lambda() {
        const double a = static_cast<double>(count_ + 1) * log_pi_ + log_prod_above_;
        const double b = static_cast<double>(count_ + 1) * log_pibar_ + log_prod_below_;
        if (a == kNegInf)
            lambda_ = 0.0;
        else if (b == kNegInf)
            lambda_ = 1.0;
        else
            lambda_ = 1.0 / (1.0 + std::exp(b - a));
    }

    const Context& ctx_;
    UtilityModel::Variant variant_;
    double log_pi_ = 0.0;
    double log_pibar_ = 0.0;
    std::vector<double> marginals_;
    std::size_t count_ = 0;
    double log_prod_above_ = 0.0;
    double log_prod_below_ = 0.0;
    double log_sum_ = 0.0;
    double lambda_ = 0.5;
};

struct HeapEntry {
    double bound;
    QueryId id;
    std::size_t index;
};

struct HeapOrder {
    // Max bound first, lowest query_id among equals.
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
        if (a.bound != b.bound) return a.bound < b.bound;
        return a.id > b.id;
    }
};

void append_member(const Context& ctx, const UtilityModel& model, GainScorer& scorer,
                   CandidateSet& cand, std::size_t index) {
    scorer.push(index);
    cand.members.push_back(ctx.row.arms[index]);
    cand.member_indices.push_back(index);
    cand.utility_trace.push_back(scorer.current_utility(model.scale));
}

CandidateSet make_empty_set(const Context& ctx) {
    CandidateSet cand;
    cand.current_arm = ctx.row.current_arm;
    cand.epsilon = ctx.part.epsilon;
    return cand;
}

}  // namespace

std::size_t k_schedule(const KSchedule& sched, std::size_t t) {
    if (t < 1) throw std::invalid_argument("k_schedule: t must be >= 1");
    if (sched.k_max < 1) throw std::invalid_argument("k_schedule: k_max must be >= 1");
    const double td = static_cast<double>(t);

    switch (sched.variant) {
        case KSchedule::Variant::fixed:
            return sched.k_max;
        case KSchedule::Variant::paper_exact: {
            if (sched.alpha < 1.0) throw std::invalid_argument("k_schedule: alpha must be >= 1");
            const double log_v = sched.alpha * std::log(td) - td;
            if (log_v < -700.0) return 0;
            if (log_v >= std::log(static_cast<double>(sched.k_max))) return sched.k_max;
            const auto k = static_cast<std::size_t>(std::ceil(std::exp(log_v)));
            return std::min(k, sched.k_max);
        }
        case KSchedule::Variant::scaled_unimodal: {
            if (sched.alpha < 1.0) throw std::invalid_argument("k_schedule: alpha must be >= 1");
            if (!(sched.tau > 0.0)) throw std::invalid_argument("k_schedule: tau must be > 0");
            // Peak value of t^alpha e^(-t/tau) is (alpha tau)^alpha e^(-alpha),
            // reached at t = alpha * tau; rescale so the peak equals k_max.
            const double log_peak =
                sched.alpha * std::log(sched.alpha * sched.tau) - sched.alpha;
            const double log_v = sched.alpha * std::log(td) - td / sched.tau;
            const double scaled = log_v - log_peak + std::log(static_cast<double>(sched.k_max));
            if (scaled < -700.0) return 0;
            if (scaled > std::log(static_cast<double>(sched.k_max))) return sched.k_max;
            const auto k = static_cast<std::size_t>(std::ceil(std::exp(scaled)));
            return std::min(k, sched.k_max);
        }
        case KSchedule::Variant::anytime_beta: {
            if (!(sched.beta > 0.0) || sched.beta > 2.0)
                throw std::invalid_argument("k_schedule: beta must be in (0, 2]");
            const double exponent = sched.beta_exponent == KSchedule::BetaExponent::half
                                        ? sched.beta / 2.0
                                        : sched.beta / (sched.beta + 2.0);
            const double v = std::pow(td, exponent);
            if (v >= static_cast<double>(sched.k_max)) return sched.k_max;
            return static_cast<std::size_t>(std::floor(v));
        }
    }
    throw std::logic_error("k_schedule: unknown variant");
}

double utility(const Context& ctx, const UtilityModel& model,
               std::span<const std::size_t> members) {
    check_model(model);
    if (members.empty()) throw std::invalid_argument("utility: empty candidate set");
    if (model.variant == UtilityModel::Variant::modular_log_marginal) {
        double sum = 0.0;
        for (std::size_t j : members)
            sum += safe_log(preference::marginal_probability(ctx.part, ctx.weights, j));
        return model.scale * sum;
    }
    return model.scale * preference::log_set_probability(ctx.part, ctx.weights, members);
}

void greedy_extend(const Context& ctx, const UtilityModel& model, CandidateSet& cand,
                   std::size_t k_target, GreedyStats* stats) {
    check_model(model);
    if (k_target < cand.members.size())
        throw std::invalid_argument("greedy_extend: k_target below current size");

    GainScorer scorer(ctx, model.variant);
    std::vector<bool> selected(ctx.size(), false);
    for (std::size_t idx : cand.member_indices) {
        selected[idx] = true;
        scorer.push(idx);
    }

    while (cand.members.size() < k_target) {
        std::size_t best = kNone;
        double best_score = 0.0;
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            if (selected[i]) continue;
            const double s = scorer.score(i);
            if (stats) ++stats->gain_evaluations;
            if (s <= 0.0) continue;
            if (best == kNone || s > best_score ||
                (s == best_score && ctx.row.arms[i] < ctx.row.arms[best])) {
                best = i;
                best_score = s;
            }
        }
        if (best == kNone) break;  // only zero-mass arms remain, never selected
        selected[best] = true;
        append_member(ctx, model, scorer, cand, best);
    }
}

CandidateSet lazy_greedy_pool(const Context& ctx, const UtilityModel& model,
                              std::span<const std::size_t> pool, std::size_t k,
                              GreedyStats* stats) {
    check_model(model);
    GainScorer scorer(ctx, model.variant);
    CandidateSet cand = make_empty_set(ctx);

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap;
    {
        std::vector<HeapEntry> entries;
        entries.reserve(pool.size());
        for (std::size_t idx : pool)
            entries.push_back({scorer.upper_bound(idx), ctx.row.arms[idx], idx});
        heap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder>(
            HeapOrder{}, std::move(entries));
    }

    std::vector<HeapEntry> popped;
    while (cand.members.size() < k && !heap.empty()) {
        std::size_t best = kNone;
        double best_score = 0.0;
        QueryId best_id = 0;
        popped.clear();
        while (!heap.empty()) {
            const HeapEntry top = heap.top();
            if (top.bound <= 0.0) break;  // score <= bound, nothing selectable left
            if (best != kNone &&
                (top.bound < best_score || (top.bound == best_score && top.id > best_id)))
                break;  // no remaining entry can beat the confirmed best
            heap.pop();
            const double s = scorer.score(top.index);
            if (stats) ++stats->gain_evaluations;
            popped.push_back(top);
            if (s > 0.0 && (best == kNone || s > best_score ||
                            (s == best_score && top.id < best_id))) {
                best = top.index;
                best_score = s;
                best_id = top.id;
            }
        }
        if (best == kNone) break;
        for (const HeapEntry& e : popped)
            if (e.index != best) heap.push(e);
        append_member(ctx, model, scorer, cand, best);
    }
    return cand;
}

CandidateSet lazy_greedy(const Context& ctx, const UtilityModel& model, std::size_t k,
                         GreedyStats* stats) {
    std::vector<std::size_t> pool(ctx.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    return lazy_greedy_pool(ctx, model, pool, k, stats);
}

CandidateSet distributed_greedy(const Context& ctx, const UtilityModel& model, std::size_t k,
                                std::size_t m, std::uint64_t partition_seed,
                                DistributedTrace* trace, GreedyStats* stats) {
    check_model(model);
    if (m == 0) throw std::invalid_argument("distributed_greedy: m must be >= 1");
    if (m > ctx.size())
        throw std::invalid_argument("distributed_greedy: more partitions than pool arms");

    std::vector<std::size_t> order(ctx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(partition_seed);
    rng.shuffle(order);

    // Contiguous chunks of the shuffled order; sizes differ by at most one.
    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    const std::size_t base = order.size() / m;
    const std::size_t extra = order.size() % m;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        chunks.emplace_back(begin, len);
        begin += len;
    }

    std::vector<CandidateSet> parts(m);
    std::vector<GreedyStats> part_stats(m);
    auto run_chunk = [&](std::size_t i) {
        const std::span<const std::size_t> pool(order.data() + chunks[i].first, chunks[i].second);
        parts[i] = lazy_greedy_pool(ctx, model, pool, k, stats ? &part_stats[i] : nullptr);
    };
    if (m == 1) {
        run_chunk(0);
    } else {
        std::vector<std::future<void>> futures;
        futures.reserve(m);
        for (std::size_t i = 0; i < m; ++i)
            futures.push_back(std::async(std::launch::async, run_chunk, i));
        for (auto& f : futures) f.get();
    }
    if (stats)
        for (const auto& ps : part_stats) stats->gain_evaluations += ps.gain_evaluations;

    std::size_t max_part = 0;
    double max_part_util = kNegInf;
    std::vector<std::size_t> merged;
    for (std::size_t i = 0; i < m; ++i) {
        merged.insert(merged.end(), parts[i].member_indices.begin(),
                      parts[i].member_indices.end());
        if (parts[i].members.empty()) continue;
        const double u = utility(ctx, model, parts[i].member_indices);
        if (u > max_part_util) {
            max_part_util = u;
            max_part = i;
        }
    }
    if (merged.empty()) return make_empty_set(ctx);

    CandidateSet merged_set = lazy_greedy_pool(ctx, model, merged, k, stats);
    const double merged_util =
        merged_set.members.empty() ? kNegInf : utility(ctx, model, merged_set.member_indices);
    if (trace) {
        trace->best_partition_utility = max_part_util;
        trace->merged_utility = merged_util;
    }
    return merged_util >= max_part_util ? std::move(merged_set) : std::move(parts[max_part]);
}

CandidateSet initialize_candidates(const Context& ctx, const UtilityModel& model,
                                   std::size_t k0, std::size_t m,
                                   std::uint64_t partition_seed) {
    if (k0 < 1) throw std::invalid_argument("initialize_candidates: k0 must be >= 1");
    return distributed_greedy(ctx, model, k0, m, partition_seed);
}

}  // namespace manyarm::selection
