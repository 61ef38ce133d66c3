#include "manyarm/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace manyarm::policies {

namespace {

constexpr std::size_t kRefactorPeriod = 1000;

Eigen::VectorXd embedding_of(const EmbeddingTable& table, QueryId id) {
    const double* v = table.vector(id);
    return Eigen::Map<const Eigen::VectorXd>(v, static_cast<Eigen::Index>(table.dim()));
}

void require_candidates(const RoundView& view, const char* who) {
    if (view.candidates.empty())
        throw std::invalid_argument(std::string(who) + ": empty candidate set");
}

// Rank-one inverse update: (M + p p^T)^-1 = M^-1 - (M^-1 p)(p^T M^-1)/(1 + p^T M^-1 p).
void sherman_morrison(Eigen::MatrixXd& inv, const Eigen::VectorXd& p) {
    const Eigen::VectorXd ip = inv * p;
    const double denom = 1.0 + p.dot(ip);
    inv.noalias() -= (ip * ip.transpose()) / denom;
}

}  // namespace

Eigen::VectorXd FeatureMap::operator()(const Eigen::VectorXd& current,
                                       const Eigen::VectorXd& arm) const {
    if (variant == Variant::arm_only) return arm;
    Eigen::VectorXd phi(2 * arm.size());
    phi.head(arm.size()) = arm;
    phi.tail(arm.size()) = current.cwiseProduct(arm);
    return phi;
}

LinUcbPolicy::LinUcbPolicy(std::size_t feature_dim, double alpha_ucb, double lambda,
                           FeatureMap feature_map)
    : dim_(feature_dim), alpha_ucb_(alpha_ucb), lambda_(lambda), feature_map_(feature_map) {
    if (!(lambda > 0.0)) throw std::invalid_argument("linucb: lambda must be positive");
    if (alpha_ucb < 0.0) throw std::invalid_argument("linucb: alpha_ucb must be >= 0");
    reset();
}

void LinUcbPolicy::reset() {
    const auto d = static_cast<Eigen::Index>(dim_);
    a_ = lambda_ * Eigen::MatrixXd::Identity(d, d);
    a_inv_ = (1.0 / lambda_) * Eigen::MatrixXd::Identity(d, d);
    b_ = Eigen::VectorXd::Zero(d);
    updates_ = 0;
}

Eigen::VectorXd LinUcbPolicy::feature(const RoundView& view, QueryId arm) const {
    return feature_map_(embedding_of(*view.embeddings, view.current_arm),
                        embedding_of(*view.embeddings, arm));
}

PolicyChoice LinUcbPolicy::select(const RoundView& view, Rng&) {
    require_candidates(view, "linucb_select");
    const Eigen::VectorXd theta = a_inv_ * b_;
    const Eigen::VectorXd current = embedding_of(*view.embeddings, view.current_arm);

    PolicyChoice choice;
    choice.candidate_count = view.candidates.size();
    bool first = true;
    for (QueryId id : view.candidates) {
        const Eigen::VectorXd phi = feature_map_(current, embedding_of(*view.embeddings, id));
        const double width = phi.dot(a_inv_ * phi);
        const double score = theta.dot(phi) + alpha_ucb_ * std::sqrt(std::max(width, 0.0));
        if (!std::isfinite(score))
            throw std::runtime_error("linucb_select: non-finite score, design matrix degenerate");
        if (first || score > choice.score || (score == choice.score && id < choice.chosen)) {
            choice.chosen = id;
            choice.score = score;
            first = false;
        }
    }
    return choice;
}

void LinUcbPolicy::update(const RoundView& view, QueryId chosen, int reward) {
    if (reward != 0 && reward != 1)
        throw std::invalid_argument("linucb_update: reward must be 0 or 1");
    const Eigen::VectorXd phi = feature(view, chosen);
    a_.noalias() += phi * phi.transpose();
    if (reward != 0) b_ += phi;
    ++updates_;
    if (updates_ % kRefactorPeriod == 0)
        a_inv_ = a_.llt().solve(Eigen::MatrixXd::Identity(a_.rows(), a_.cols()));
    else
        sherman_morrison(a_inv_, phi);
}

double LinUcbPolicy::inverse_drift() const {
    const Eigen::MatrixXd residual =
        a_ * a_inv_ - Eigen::MatrixXd::Identity(a_.rows(), a_.cols());
    return residual.cwiseAbs().maxCoeff();
}

LinThompSampPolicy::LinThompSampPolicy(std::size_t feature_dim, double v, FeatureMap feature_map)
    : dim_(feature_dim), v_(v), feature_map_(feature_map) {
    if (v < 0.0) throw std::invalid_argument("linthompsamp: v must be >= 0");
    reset();
}

void LinThompSampPolicy::reset() {
    const auto d = static_cast<Eigen::Index>(dim_);
    b_ = Eigen::MatrixXd::Identity(d, d);
    b_inv_ = Eigen::MatrixXd::Identity(d, d);
    f_ = Eigen::VectorXd::Zero(d);
    mu_hat_ = Eigen::VectorXd::Zero(d);
    chol_dirty_ = true;
    updates_ = 0;
}

Eigen::VectorXd LinThompSampPolicy::feature(const RoundView& view, QueryId arm) const {
    return feature_map_(embedding_of(*view.embeddings, view.current_arm),
                        embedding_of(*view.embeddings, arm));
}

PolicyChoice LinThompSampPolicy::select(const RoundView& view, Rng& rng) {
    require_candidates(view, "linthompsamp_select");

    Eigen::VectorXd theta = mu_hat_;
    if (v_ > 0.0) {
        if (chol_dirty_) {
            chol_.compute(b_);
            if (chol_.info() != Eigen::Success)
                throw std::runtime_error("linthompsamp_select: Cholesky failed, B not PD");
            chol_dirty_ = false;
        }
        Eigen::VectorXd z(static_cast<Eigen::Index>(dim_));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.gaussian();
        // Cov[L^-T z] = (L L^T)^-1 = B^-1.
        theta += v_ * chol_.matrixU().solve(z);
    }

    const Eigen::VectorXd current = embedding_of(*view.embeddings, view.current_arm);
    PolicyChoice choice;
    choice.candidate_count = view.candidates.size();
    bool first = true;
    for (QueryId id : view.candidates) {
        const Eigen::VectorXd phi = feature_map_(current, embedding_of(*view.embeddings, id));
        const double score = theta.dot(phi);
        if (first || score > choice.score || (score == choice.score && id < choice.chosen)) {
            choice.chosen = id;
            choice.score = score;
            first = false;
        }
    }
    return choice;
}

void LinThompSampPolicy::update(const RoundView& view, QueryId chosen, int reward) {
    if (reward != 0 && reward != 1)
        throw std::invalid_argument("linthompsamp update: reward must be 0 or 1");
    const Eigen::VectorXd phi = feature(view, chosen);
    b_.noalias() += phi * phi.transpose();
    if (reward != 0) f_ += phi;
    ++updates_;
    if (updates_ % kRefactorPeriod == 0)
        b_inv_ = b_.llt().solve(Eigen::MatrixXd::Identity(b_.rows(), b_.cols()));
    else
        sherman_morrison(b_inv_, phi);
    mu_hat_ = b_inv_ * f_;
    chol_dirty_ = true;
}

PolicyChoice RandomPolicy::select(const RoundView& view, Rng& rng) {
    require_candidates(view, "random_select");
    PolicyChoice choice;
    choice.candidate_count = view.candidates.size();
    choice.chosen = view.candidates[rng.uniform_index(view.candidates.size())];
    choice.score = 1.0 / static_cast<double>(view.candidates.size());
    return choice;
}

PolicyChoice MostSimilarPolicy::select(const RoundView& view, Rng& rng) {
    require_candidates(view, "most_similar_select");
    if (view.marginals.size() != view.candidates.size())
        throw std::invalid_argument("most_similar_select: marginals missing");

    std::vector<std::size_t> order(view.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (view.marginals[a] != view.marginals[b]) return view.marginals[a] > view.marginals[b];
        return view.candidates[a] < view.candidates[b];
    });

    const std::size_t top = std::min<std::size_t>(5, order.size());
    const std::size_t pick = order[rng.uniform_index(top)];
    PolicyChoice choice;
    choice.candidate_count = view.candidates.size();
    choice.chosen = view.candidates[pick];
    choice.score = view.marginals[pick];
    return choice;
}

std::vector<QueryId> zooming_candidates(std::span<const QueryId> pool, QueryId current_arm,
                                        double epsilon, const EmbeddingTable& embeddings,
                                        bool* fell_back) {
    if (pool.empty()) throw std::invalid_argument("zooming_candidates: empty pool");
    const double* cur = embeddings.vector(current_arm);
    const double cur_norm = embeddings.norm(current_arm);
    const std::size_t d = embeddings.dim();

    std::vector<QueryId> region;
    for (QueryId id : pool) {
        if (id == current_arm) continue;
        const double* v = embeddings.vector(id);
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += cur[i] * v[i];
        const double sim = std::max(dot / (cur_norm * embeddings.norm(id)), 0.0);
        if (sim >= epsilon) region.push_back(id);
    }
    if (fell_back) *fell_back = region.empty();
    if (region.empty()) {
        region.reserve(pool.size());
        for (QueryId id : pool)
            if (id != current_arm) region.push_back(id);
    }
    return region;
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, std::size_t embedding_dim) {
    const std::size_t feature_dim = spec.feature_map.output_dim(embedding_dim);
    switch (spec.kind) {
        case PolicySpec::Kind::linucb:
            return std::make_unique<LinUcbPolicy>(feature_dim, spec.alpha_ucb, spec.lambda,
                                                  spec.feature_map);
        case PolicySpec::Kind::linthompsamp:
            return std::make_unique<LinThompSampPolicy>(feature_dim, spec.v, spec.feature_map);
        case PolicySpec::Kind::random:
            return std::make_unique<RandomPolicy>();
        case PolicySpec::Kind::most_similar:
            return std::make_unique<MostSimilarPolicy>();
    }
    throw std::logic_error("make_policy: unknown policy kind");
}

}  // namespace manyarm::policies
