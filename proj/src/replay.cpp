#include "manyarm/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace manyarm::replay {

namespace {

// Per-session candidate machinery. The preference context is rebuilt whenever
// the current arm changes; under the same arm the candidate set only grows.
class CandidateDriver {
public:
    CandidateDriver(const ReplayConfig& cfg, const EmbeddingTable& embeddings,
                    std::span<const QueryId> pool, std::size_t k0, Rng& rng)
        : cfg_(cfg), embeddings_(embeddings), pool_(pool), k0_(k0) {
        if (cfg.strategy == SelectionStrategy::random_k)
            fixed_draw_ = random_k_candidates(pool, cfg.schedule.k_max, rng);
    }

    // Candidates for the current round; view_marginals is filled (aligned with
    // the returned candidates) when requested.
    const std::vector<QueryId>& round_candidates(QueryId current, std::size_t k_target,
                                                 bool want_marginals, bool session_start,
                                                 std::uint64_t partition_seed) {
        const bool arm_changed = !has_ctx_ || current != ctx_arm_;
        if (arm_changed) build_context(current);

        switch (cfg_.strategy) {
            case SelectionStrategy::max_utility: {
                if (degenerate_) {
                    fallback_pool(current);
                    break;
                }
                if (arm_changed) {
                    if (session_start) {
                        cand_ = selection::initialize_candidates(
                            ctx_, cfg_.utility, std::min(k0_, ctx_.size()),
                            std::min(cfg_.distributed_m, ctx_.size()), partition_seed);
                    } else {
                        cand_ = selection::lazy_greedy(ctx_, cfg_.utility,
                                                       std::min(k_target, ctx_.size()));
                    }
                }
                if (cand_.members.size() < k_target)
                    selection::greedy_extend(ctx_, cfg_.utility, cand_,
                                             std::min(k_target, ctx_.size()));
                candidates_ = cand_.members;
                if (want_marginals) marginals_for(cand_.member_indices);
                break;
            }
            case SelectionStrategy::zooming: {
                candidates_.clear();
                std::vector<std::size_t> indices;
                for (std::size_t i = 0; i < ctx_.row.size(); ++i) {
                    if (std::max(ctx_.row.scores[i], 0.0) >= cfg_.epsilon) {
                        candidates_.push_back(ctx_.row.arms[i]);
                        indices.push_back(i);
                    }
                }
                if (candidates_.empty()) {
                    fallback_pool(current);
                } else if (want_marginals) {
                    marginals_for(indices);
                }
                break;
            }
            case SelectionStrategy::random_k: {
                candidates_.clear();
                std::vector<std::size_t> indices;
                for (QueryId id : fixed_draw_) {
                    if (id == current) continue;
                    candidates_.push_back(id);
                    if (want_marginals) indices.push_back(row_index_of(id));
                }
                if (want_marginals) marginals_for(indices);
                break;
            }
        }
        if (candidates_.empty())
            throw std::runtime_error("replay: no candidates available for arm " +
                                     std::to_string(current));
        return candidates_;
    }

    std::span<const double> marginals() const { return marginals_; }

private:
    void build_context(QueryId current) {
        ctx_.row = preference::similarity_row(embeddings_, current, pool_);
        degenerate_ = false;
        try {
            ctx_.part = preference::make_partition(ctx_.row, cfg_.epsilon);
            ctx_.weights = preference::make_weights(ctx_.row, ctx_.part);
        } catch (const std::runtime_error&) {
            degenerate_ = true;  // every similarity non-positive: no preference signal
        }
        ctx_arm_ = current;
        has_ctx_ = true;
        row_index_.clear();
        cand_ = selection::CandidateSet{};
    }

    std::size_t row_index_of(QueryId id) {
        if (row_index_.empty())
            for (std::size_t i = 0; i < ctx_.row.size(); ++i) row_index_.emplace(ctx_.row.arms[i], i);
        return row_index_.at(id);
    }

    void marginals_for(const std::vector<std::size_t>& indices) {
        marginals_.resize(candidates_.size());
        if (degenerate_ || indices.size() != candidates_.size()) {
            std::fill(marginals_.begin(), marginals_.end(),
                      1.0 / static_cast<double>(std::max<std::size_t>(candidates_.size(), 1)));
            return;
        }
        for (std::size_t i = 0; i < indices.size(); ++i)
            marginals_[i] = preference::marginal_probability(ctx_.part, ctx_.weights, indices[i]);
    }

    void fallback_pool(QueryId current) {
        candidates_.clear();
        for (QueryId id : pool_)
            if (id != current) candidates_.push_back(id);
        marginals_.assign(candidates_.size(), 1.0 / static_cast<double>(candidates_.size()));
    }

    const ReplayConfig& cfg_;
    const EmbeddingTable& embeddings_;
    std::span<const QueryId> pool_;
    std::size_t k0_;
    preference::Context ctx_;
    selection::CandidateSet cand_;
    std::vector<QueryId> fixed_draw_;
    std::vector<QueryId> candidates_;
    std::vector<double> marginals_;
    std::unordered_map<QueryId, std::size_t> row_index_;
    QueryId ctx_arm_ = 0;
    bool has_ctx_ = false;
    bool degenerate_ = false;
};

}  // namespace

void validate(const ReplayConfig& cfg) {
    if (cfg.strategy == SelectionStrategy::random_k &&
        cfg.schedule.variant != selection::KSchedule::Variant::fixed)
        throw std::invalid_argument("replay config: random_k requires a fixed k schedule");
    if (!std::isfinite(cfg.epsilon) || cfg.epsilon > 1.0)
        throw std::invalid_argument("replay config: epsilon must be finite and <= 1");
    if (cfg.distributed_m < 1)
        throw std::invalid_argument("replay config: distributed_m must be >= 1");
}

std::vector<QueryId> random_k_candidates(std::span<const QueryId> pool, std::size_t k, Rng& rng) {
    if (k > pool.size())
        throw std::invalid_argument("random_k_candidates: k exceeds pool size");
    std::vector<QueryId> all(pool.begin(), pool.end());
    return rng.sample_without_replacement(all, k);
}

std::vector<RoundLog> replay_session(const Session& session, const ReplayConfig& cfg,
                                     const EmbeddingTable& embeddings,
                                     std::span<const QueryId> pool, policies::Policy& policy,
                                     Rng& rng, std::size_t t_offset, std::size_t* k_floor) {
    if (session.length() < 2)
        throw std::invalid_argument("replay_session: session needs an initial query plus targets");
    for (QueryId id : session.query_ids)
        if (!embeddings.contains(id))
            throw std::runtime_error("replay_session: query_id " + std::to_string(id) +
                                     " has no embedding");

    const std::size_t k0 =
        std::max<std::size_t>(1, cfg.k0.value_or(k_schedule(cfg.schedule, 1)));
    CandidateDriver driver(cfg, embeddings, pool, k0, rng);

    // Future occurrences; each creditable once. On a miss the user issues the
    // earliest unconsumed logged query.
    std::vector<QueryId> future(session.query_ids.begin() + 1, session.query_ids.end());
    std::vector<bool> consumed(future.size(), false);
    std::unordered_map<QueryId, std::size_t> available;
    for (QueryId id : future) ++available[id];
    std::size_t cursor = 0;  // earliest possibly-unconsumed position

    auto consume_earliest_of = [&](QueryId id) {
        for (std::size_t i = cursor; i < future.size(); ++i) {
            if (!consumed[i] && future[i] == id) {
                consumed[i] = true;
                return;
            }
        }
    };

    std::vector<RoundLog> rounds;
    rounds.reserve(future.size());
    QueryId current = session.query_ids.front();
    std::size_t local_k_floor = 0;
    if (!k_floor) k_floor = &local_k_floor;
    bool session_start = true;

    for (std::size_t step = 0; step < future.size(); ++step) {
        const std::size_t t = t_offset + step + 1;
        *k_floor = std::max(*k_floor, k_schedule(cfg.schedule, t));

        const auto& candidates =
            driver.round_candidates(current, std::max<std::size_t>(1, *k_floor),
                                    policy.wants_marginals(), session_start, cfg.rng_seed);
        session_start = false;

        policies::RoundView view;
        view.candidates = candidates;
        view.embeddings = &embeddings;
        view.current_arm = current;
        view.marginals = driver.marginals();

        const policies::PolicyChoice choice = policy.select(view, rng);
        auto hit = available.find(choice.chosen);
        const int reward = (hit != available.end() && hit->second > 0) ? 1 : 0;
        policy.update(view, choice.chosen, reward);

        RoundLog log;
        log.t = t;
        log.session_id = session.session_id;
        log.current_arm = current;
        log.recommended = choice.chosen;
        log.reward = reward;
        log.candidate_size = candidates.size();
        rounds.push_back(std::move(log));

        if (reward == 1) {
            --hit->second;
            consume_earliest_of(choice.chosen);
            current = choice.chosen;
        } else {
            while (cursor < future.size() && consumed[cursor]) ++cursor;
            // cursor < future.size() here: rounds run once per occurrence
            consumed[cursor] = true;
            --available[future[cursor]];
            current = future[cursor];
        }
        while (cursor < future.size() && consumed[cursor]) ++cursor;
    }
    return rounds;
}

ReplayOutcome replay_corpus(std::span<const Session> sessions, const ReplayConfig& cfg,
                            const EmbeddingTable& embeddings) {
    validate(cfg);
    if (sessions.empty())
        throw std::invalid_argument("replay_corpus: need at least one session");

    ReplayOutcome outcome;
    Rng rng(cfg.rng_seed);
    auto policy = policies::make_policy(cfg.policy, embeddings.dim());
    const std::span<const QueryId> pool(embeddings.ids());

    std::size_t t = 0;
    std::size_t k_floor = 0;
    double hits = 0.0;
    for (const auto& session : sessions) {
        if (cfg.reset_per_session) policy->reset();
        auto rounds = replay_session(session, cfg, embeddings, pool, *policy, rng, t, &k_floor);
        for (auto& r : rounds) {
            hits += r.reward;
            const double td = static_cast<double>(r.t);
            outcome.cumulative_regret.push_back(td - hits);
            outcome.per_round_regret.push_back((td - hits) / td);
            outcome.rounds.push_back(std::move(r));
        }
        t += rounds.size();
    }
    return outcome;
}

void write_round_log(const std::filesystem::path& path, std::span<const RoundLog> rounds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write round log: " + path.string());
    out << "t,session_id,current_arm,recommended,reward,candidate_size\n";
    for (const auto& r : rounds)
        out << r.t << ',' << r.session_id << ',' << r.current_arm << ',' << r.recommended << ','
            << r.reward << ',' << r.candidate_size << '\n';
}

}  // namespace manyarm::replay
