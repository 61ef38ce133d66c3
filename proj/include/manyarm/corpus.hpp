#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace manyarm::corpus {

using QueryId = std::uint32_t;

// One line of a session log. query_id is assigned densely at ingest and is
// shared by records with byte-identical query_text.
struct QueryRecord {
    std::string session_id;
    std::int64_t timestamp_ms = 0;
    std::string query_text;
    QueryId query_id = 0;
};

struct Session {
    std::string session_id;
    std::vector<QueryId> query_ids;  // timestamp order, ties keep file order

    std::size_t length() const { return query_ids.size(); }
};

// Dense store of d-dimensional context vectors keyed by query id.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool unit_norm() const { return unit_norm_; }
    void set_unit_norm(bool v) { unit_norm_ = v; }

    const std::vector<QueryId>& ids() const { return ids_; }

    bool contains(QueryId id) const { return index_.count(id) != 0; }

    // Pointer to the id's vector (length dim). Throws if absent.
    const double* vector(QueryId id) const;
    double norm(QueryId id) const;

    const double* row(std::size_t pos) const { return data_.data() + pos * dim_; }
    double row_norm(std::size_t pos) const { return norms_[pos]; }

    // Throws on duplicate id or dimension mismatch.
    void insert(QueryId id, const std::vector<double>& values);

private:
    std::size_t dim_ = 0;
    bool unit_norm_ = false;
    std::vector<QueryId> ids_;           // insertion order
    std::vector<double> data_;           // row-major, size() x dim()
    std::vector<double> norms_;          // cached L2 norms
    std::unordered_map<QueryId, std::size_t> index_;
};

struct SyntheticConfig {
    std::size_t num_sessions = 100;
    std::size_t dim = 16;
    std::size_t num_topics = 10;
    double topic_spread = 0.15;            // within-session cluster std-dev
    std::pair<std::size_t, std::size_t> session_length_range{4, 12};
    double noise_fraction = 0.0;           // probability a query is off-topic
    std::uint64_t rng_seed = 1;
    // Pool-only arms so |A| far exceeds session lengths. Distractors are drawn
    // around topic centroids with distractor_spread_scale * topic_spread.
    std::size_t num_distractors = 5000;
    double distractor_spread_scale = 2.0;
};

struct CorpusStats {
    std::size_t total_queries = 0;
    std::size_t total_sessions = 0;
    std::size_t retained_queries = 0;
    std::size_t retained_sessions = 0;
    double mean_session_length_before = 0.0;
    double mean_session_length_after = 0.0;
};

// Reads session_id<TAB>timestamp_ms<TAB>query_text lines. Identical query
// texts share one query_id. Throws std::runtime_error naming the offending
// line on malformed input; an empty file yields an empty list.
std::vector<QueryRecord> parse_log(const std::filesystem::path& path);

// Inverse of parse_log, used for round-trip checks and synthetic exports.
void write_log(const std::filesystem::path& path, const std::vector<QueryRecord>& records);

// Groups records by session id, sorts by timestamp (stable: ties keep file
// order), and drops sessions outside [min_len, max_len].
std::vector<Session> build_sessions(const std::vector<QueryRecord>& records,
                                    std::size_t min_len = 4, std::size_t max_len = 50);

CorpusStats corpus_stats(const std::vector<QueryRecord>& records,
                         const std::vector<Session>& sessions);

// Text format: header "n d", then n rows "query_id v1 ... vd". A binary
// variant is accepted: magic "EMB1", u32 n, u32 d (little-endian), then n*d
// f32 values with implicit query ids 0..n-1.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

void write_embeddings_text(const std::filesystem::path& path, const EmbeddingTable& table);
void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingTable& table);

// Clustered sessions plus distractor arms; deterministic in cfg.rng_seed.
// All vectors are unit-norm.
std::pair<std::vector<Session>, EmbeddingTable> generate_synthetic(const SyntheticConfig& cfg);

// Every query id referenced by a session must resolve in the table; throws
// naming the first missing id.
void validate_resolvable(const std::vector<Session>& sessions, const EmbeddingTable& table);

}  // namespace manyarm::corpus
