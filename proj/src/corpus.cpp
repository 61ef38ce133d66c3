#include "manyarm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "manyarm/rng.hpp"

namespace manyarm::corpus {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<double> normalized(std::vector<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double n = std::sqrt(sq);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
    return v;
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.gaussian();
    return normalized(std::move(v));
}

}  // namespace

const double* EmbeddingTable::vector(QueryId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail("embedding table: unknown query_id " + std::to_string(id));
    return row(it->second);
}

double EmbeddingTable::norm(QueryId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail("embedding table: unknown query_id " + std::to_string(id));
    return norms_[it->second];
}

void EmbeddingTable::insert(QueryId id, const std::vector<double>& values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_)
        fail("embedding table: query_id " + std::to_string(id) + " has dimension " +
             std::to_string(values.size()) + ", expected " + std::to_string(dim_));
    if (!index_.emplace(id, ids_.size()).second)
        fail("embedding table: duplicate query_id " + std::to_string(id));
    double sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v))
            fail("embedding table: non-finite value for query_id " + std::to_string(id));
        sq += v * v;
    }
    ids_.push_back(id);
    data_.insert(data_.end(), values.begin(), values.end());
    norms_.push_back(std::sqrt(sq));
}

std::vector<QueryRecord> parse_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open log file: " + path.string());

    std::vector<QueryRecord> records;
    std::unordered_map<std::string, QueryId> text_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            fail("log line " + std::to_string(line_no) + ": expected 3 tab-separated fields");

        QueryRecord rec;
        rec.session_id = line.substr(0, tab1);
        const std::string ts = line.substr(tab1 + 1, tab2 - tab1 - 1);
        rec.query_text = line.substr(tab2 + 1);
        try {
            std::size_t used = 0;
            rec.timestamp_ms = std::stoll(ts, &used);
            if (used != ts.size()) throw std::invalid_argument(ts);
        } catch (const std::exception&) {
            fail("log line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
        }
        if (rec.session_id.empty())
            fail("log line " + std::to_string(line_no) + ": empty session_id");

        auto [it, inserted] =
            text_ids.emplace(rec.query_text, static_cast<QueryId>(text_ids.size()));
        (void)inserted;
        rec.query_id = it->second;
        records.push_back(std::move(rec));
    }
    return records;
}

void write_log(const std::filesystem::path& path, const std::vector<QueryRecord>& records) {
    std::ofstream out(path);
    if (!out) fail("cannot write log file: " + path.string());
    for (const auto& rec : records)
        out << rec.session_id << '\t' << rec.timestamp_ms << '\t' << rec.query_text << '\n';
}

std::vector<Session> build_sessions(const std::vector<QueryRecord>& records,
                                    std::size_t min_len, std::size_t max_len) {
    // Group while preserving first-appearance order of session ids.
    std::unordered_map<std::string, std::size_t> pos;
    std::vector<std::string> order;
    std::vector<std::vector<std::pair<std::int64_t, QueryId>>> grouped;
    for (const auto& rec : records) {
        auto [it, inserted] = pos.emplace(rec.session_id, grouped.size());
        if (inserted) {
            order.push_back(rec.session_id);
            grouped.emplace_back();
        }
        grouped[it->second].emplace_back(rec.timestamp_ms, rec.query_id);
    }

    std::vector<Session> sessions;
    for (std::size_t i = 0; i < grouped.size(); ++i) {
        auto& entries = grouped[i];
        if (entries.size() < min_len || entries.size() > max_len) continue;
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        Session s;
        s.session_id = order[i];
        s.query_ids.reserve(entries.size());
        for (const auto& [ts, qid] : entries) {
            (void)ts;
            s.query_ids.push_back(qid);
        }
        sessions.push_back(std::move(s));
    }
    return sessions;
}

CorpusStats corpus_stats(const std::vector<QueryRecord>& records,
                         const std::vector<Session>& sessions) {
    CorpusStats st;
    st.total_queries = records.size();
    std::unordered_map<std::string, std::size_t> lens;
    for (const auto& rec : records) ++lens[rec.session_id];
    st.total_sessions = lens.size();
    for (const auto& s : sessions) st.retained_queries += s.length();
    st.retained_sessions = sessions.size();
    if (st.total_sessions > 0)
        st.mean_session_length_before =
            static_cast<double>(st.total_queries) / static_cast<double>(st.total_sessions);
    if (st.retained_sessions > 0)
        st.mean_session_length_after =
            static_cast<double>(st.retained_queries) / static_cast<double>(st.retained_sessions);
    return st;
}

namespace {

EmbeddingTable load_embeddings_binary(std::ifstream& in, const std::filesystem::path& path) {
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in || d == 0) fail("embedding file " + path.string() + ": bad binary header");
    EmbeddingTable table(d);
    std::vector<float> row(d);
    std::vector<double> values(d);
    for (std::uint32_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(d) * 4);
        if (!in)
            fail("embedding file " + path.string() + ": truncated row for query_id " +
                 std::to_string(i));
        for (std::uint32_t j = 0; j < d; ++j) values[j] = static_cast<double>(row[j]);
        table.insert(i, values);
    }
    return table;
}

}  // namespace

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open embedding file: " + path.string());

    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (in && std::memcmp(magic, "EMB1", 4) == 0) return load_embeddings_binary(in, path);

    in.clear();
    in.seekg(0);
    std::size_t n = 0;
    std::size_t d = 0;
    if (!(in >> n >> d) || d == 0)
        fail("embedding file " + path.string() + ": bad header, expected 'n d'");
    EmbeddingTable table(d);
    std::vector<double> values(d);
    for (std::size_t i = 0; i < n; ++i) {
        QueryId id = 0;
        if (!(in >> id))
            fail("embedding file " + path.string() + ": expected " + std::to_string(n) +
                 " rows, got " + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j) {
            if (!(in >> values[j]))
                fail("embedding file " + path.string() + ": query_id " + std::to_string(id) +
                     ": expected " + std::to_string(d) + " values");
        }
        table.insert(id, values);  // throws on duplicates / non-finite
    }

    bool unit = table.size() > 0;
    for (std::size_t i = 0; i < table.size() && unit; ++i)
        unit = std::abs(table.row_norm(i) - 1.0) <= 1e-9;
    table.set_unit_norm(unit);
    return table;
}

void write_embeddings_text(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) fail("cannot write embedding file: " + path.string());
    out.precision(17);
    out << table.size() << ' ' << table.dim() << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.ids()[i];
        const double* v = table.row(i);
        for (std::size_t j = 0; j < table.dim(); ++j) out << ' ' << v[j];
        out << '\n';
    }
}

void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingTable& table) {
    // Binary rows carry implicit ids 0..n-1; require the table to match.
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table.ids()[i] != i)
            fail("binary embedding format requires dense ids 0..n-1");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write embedding file: " + path.string());
    out.write("EMB1", 4);
    const std::uint32_t n = static_cast<std::uint32_t>(table.size());
    const std::uint32_t d = static_cast<std::uint32_t>(table.dim());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    std::vector<float> row(d);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const double* v = table.row(i);
        for (std::uint32_t j = 0; j < d; ++j) row[j] = static_cast<float>(v[j]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(d) * 4);
    }
}

std::pair<std::vector<Session>, EmbeddingTable> generate_synthetic(const SyntheticConfig& cfg) {
    const auto [min_len, max_len] = cfg.session_length_range;
    if (min_len < 4 || max_len > 50 || min_len > max_len)
        fail("synthetic config: session_length_range must lie within [4,50]");
    if (cfg.topic_spread < 0.0) fail("synthetic config: topic_spread must be >= 0");
    if (cfg.noise_fraction < 0.0 || cfg.noise_fraction > 1.0)
        fail("synthetic config: noise_fraction must be in [0,1]");
    if (cfg.num_topics == 0 || cfg.dim == 0) fail("synthetic config: dim and num_topics must be > 0");

    Rng rng(cfg.rng_seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(cfg.num_topics);
    for (std::size_t t = 0; t < cfg.num_topics; ++t)
        centroids.push_back(random_unit_vector(rng, cfg.dim));

    EmbeddingTable table(cfg.dim);
    QueryId next_id = 0;

    auto draw_around = [&](const std::vector<double>& centroid, double spread) {
        if (cfg.noise_fraction > 0.0 && rng.uniform() < cfg.noise_fraction)
            return random_unit_vector(rng, cfg.dim);
        std::vector<double> v(centroid);
        if (spread > 0.0)
            for (double& x : v) x += spread * rng.gaussian();
        return normalized(std::move(v));
    };

    std::vector<Session> sessions;
    sessions.reserve(cfg.num_sessions);
    for (std::size_t s = 0; s < cfg.num_sessions; ++s) {
        const std::size_t topic = rng.uniform_index(cfg.num_topics);
        const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
        Session session;
        session.session_id = "syn-" + std::to_string(s);
        session.query_ids.reserve(len);
        for (std::size_t q = 0; q < len; ++q) {
            table.insert(next_id, draw_around(centroids[topic], cfg.topic_spread));
            session.query_ids.push_back(next_id++);
        }
        sessions.push_back(std::move(session));
    }

    const double distractor_spread = cfg.topic_spread * cfg.distractor_spread_scale;
    for (std::size_t i = 0; i < cfg.num_distractors; ++i) {
        const std::size_t topic = i % cfg.num_topics;
        table.insert(next_id++, draw_around(centroids[topic], distractor_spread));
    }

    table.set_unit_norm(true);
    return {std::move(sessions), std::move(table)};
}

void validate_resolvable(const std::vector<Session>& sessions, const EmbeddingTable& table) {
    for (const auto& s : sessions)
        for (QueryId id : s.query_ids)
            if (!table.contains(id))
                fail("session " + s.session_id + " references query_id " + std::to_string(id) +
                     " with no embedding");
}

}  // namespace manyarm::corpus
