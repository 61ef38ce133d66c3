#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "manyarm/corpus.hpp"
#include "manyarm/rng.hpp"

namespace manyarm::policies {

using corpus::EmbeddingTable;
using corpus::QueryId;

// How the current query context a_i and a candidate arm a_j combine into the
// linear-model feature vector.
struct FeatureMap {
    enum class Variant { arm_only, concat_hadamard };
    Variant variant = Variant::concat_hadamard;

    std::size_t output_dim(std::size_t d) const {
        return variant == Variant::arm_only ? d : 2 * d;
    }

    // phi(a_i, a_j): a_j alone, or [a_j ; a_i (.) a_j].
    Eigen::VectorXd operator()(const Eigen::VectorXd& current,
                               const Eigen::VectorXd& arm) const;
};

struct PolicyChoice {
    QueryId chosen = 0;
    double score = 0.0;  // UCB value / sampled payoff / marginal prob / uniform
    std::size_t candidate_count = 0;
};

// Everything a policy may inspect in one round. Marginals (aligned with
// candidates) are present only when the round has a preference context.
struct RoundView {
    std::span<const QueryId> candidates;
    const EmbeddingTable* embeddings = nullptr;
    QueryId current_arm = 0;
    std::span<const double> marginals;  // may be empty
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyChoice select(const RoundView& view, Rng& rng) = 0;
    virtual void update(const RoundView& view, QueryId chosen, int reward) = 0;
    virtual void reset() = 0;
    virtual std::string name() const = 0;
    virtual bool wants_marginals() const { return false; }
};

// Ridge-regularized shared-parameter linear UCB. A starts at lambda*I and
// accumulates phi phi^T; the inverse is maintained by Sherman-Morrison with a
// periodic full refactorization to bound drift.
class LinUcbPolicy : public Policy {
public:
    LinUcbPolicy(std::size_t feature_dim, double alpha_ucb = 1.0, double lambda = 1.0,
                 FeatureMap feature_map = {});

    PolicyChoice select(const RoundView& view, Rng& rng) override;
    void update(const RoundView& view, QueryId chosen, int reward) override;
    void reset() override;
    std::string name() const override { return "linucb"; }

    const Eigen::MatrixXd& design_matrix() const { return a_; }
    const Eigen::VectorXd& response() const { return b_; }
    const Eigen::MatrixXd& design_inverse() const { return a_inv_; }

    // Exposed for tests: max-norm of A * A_inv - I.
    double inverse_drift() const;

    Eigen::VectorXd feature(const RoundView& view, QueryId arm) const;

private:
    std::size_t dim_;
    double alpha_ucb_;
    double lambda_;
    FeatureMap feature_map_;
    Eigen::MatrixXd a_;
    Eigen::MatrixXd a_inv_;
    Eigen::VectorXd b_;
    std::size_t updates_ = 0;
};

// Gaussian Thompson sampling for the shared linear model: draws
// theta ~ N(mu_hat, v^2 B^-1) and plays the argmax of theta^T phi.
class LinThompSampPolicy : public Policy {
public:
    LinThompSampPolicy(std::size_t feature_dim, double v = 0.25, FeatureMap feature_map = {});

    PolicyChoice select(const RoundView& view, Rng& rng) override;
    void update(const RoundView& view, QueryId chosen, int reward) override;
    void reset() override;
    std::string name() const override { return "linthompsamp"; }

    const Eigen::MatrixXd& precision() const { return b_; }
    const Eigen::VectorXd& mean() const { return mu_hat_; }

    Eigen::VectorXd feature(const RoundView& view, QueryId arm) const;

private:
    std::size_t dim_;
    double v_;
    FeatureMap feature_map_;
    Eigen::MatrixXd b_;
    Eigen::MatrixXd b_inv_;
    Eigen::VectorXd f_;
    Eigen::VectorXd mu_hat_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    bool chol_dirty_ = true;
    std::size_t updates_ = 0;
};

class RandomPolicy : public Policy {
public:
    PolicyChoice select(const RoundView& view, Rng& rng) override;
    void update(const RoundView&, QueryId, int) override {}
    void reset() override {}
    std::string name() const override { return "random"; }
};

// Uniform draw among the top five candidates by marginal probability.
class MostSimilarPolicy : public Policy {
public:
    PolicyChoice select(const RoundView& view, Rng& rng) override;
    void update(const RoundView&, QueryId, int) override {}
    void reset() override {}
    std::string name() const override { return "most-similar"; }
    bool wants_marginals() const override { return true; }
};

// Zooming baseline candidate region: every pool arm whose clamped similarity
// to the current arm is at least epsilon; falls back to the whole pool when
// the region is empty.
std::vector<QueryId> zooming_candidates(std::span<const QueryId> pool, QueryId current_arm,
                                        double epsilon, const EmbeddingTable& embeddings,
                                        bool* fell_back = nullptr);

struct PolicySpec {
    enum class Kind { linucb, linthompsamp, random, most_similar };
    Kind kind = Kind::linucb;
    double alpha_ucb = 1.0;
    double lambda = 1.0;
    double v = 0.25;
    FeatureMap feature_map = {};
};

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, std::size_t embedding_dim);

}  // namespace manyarm::policies
