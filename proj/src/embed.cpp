#include "adapcr/embed.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "adapcr/corpus.hpp"
#include "adapcr/error.hpp"
#include "adapcr/rng.hpp"
#include "http_client.hpp"
#include "json.hpp"

namespace adapcr {

using json = nlohmann::json;

const char* to_string(Side side) noexcept { return side == Side::Query ? "query" : "passage"; }

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(const std::vector<std::string>& texts,
                                                            Side side) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t, side));
    return out;
}

// ---------------------------------------------------------------------------

EmbeddingVector deterministic_hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
    if (dim < 2) throw ConfigError("hash embedding dimension must be at least 2");
    EmbeddingVector v = EmbeddingVector::Zero(static_cast<Eigen::Index>(dim));
    const std::uint64_t basis = rng::splitmix64(seed ^ 0xcbf29ce484222325ULL);
    const auto tokens = tokenize(text);
    for (const auto& token : tokens) {
        const std::uint64_t h = rng::splitmix64(rng::fnv1a64(token, basis));
        const auto bucket = static_cast<Eigen::Index>((h >> 1) % dim);
        v[bucket] += (h & 1U) ? -1.0 : 1.0;
    }
    // Signs can cancel exactly; fall back to unsigned counts so any text
    // with a token still gets a unit vector.
    if (!tokens.empty() && v.isZero(0.0)) {
        for (const auto& token : tokens) {
            const std::uint64_t h = rng::splitmix64(rng::fnv1a64(token, basis));
            v[static_cast<Eigen::Index>((h >> 1) % dim)] += 1.0;
        }
    }
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) throw ConfigError("hash embedding dimension must be at least 2");
}

EmbeddingVector HashEmbedder::embed(std::string_view text, Side) const {
    return deterministic_hash_embed(text, dim_, seed_);
}

// ---------------------------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t dim, int max_attempts, int backoff_ms)
    : endpoint_(std::move(endpoint)), dim_(dim), max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
    if (endpoint_.empty()) throw ConfigError("remote embedding provider requires an endpoint");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text, Side side) const {
    return embed_batch({std::string(text)}, side).front();
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts, Side side) const {
    const json reply = detail::post_json(endpoint_, "/embed", json{{"texts", texts}, {"side", to_string(side)}},
                                         {max_attempts_, backoff_ms_});
    if (!reply.is_object() || !reply.contains("vectors") || !reply["vectors"].is_array()) {
        throw ContractError("/embed reply lacks a \"vectors\" array");
    }
    if (reply.contains("dim") && (!reply["dim"].is_number_integer() || reply["dim"].get<std::size_t>() != dim_)) {
        throw ContractError("/embed reply dimension does not match " + std::to_string(dim_));
    }
    const json& vectors = reply["vectors"];
    if (vectors.size() != texts.size()) throw ContractError("/embed reply has the wrong number of vectors");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& row : vectors) {
        if (!row.is_array() || row.size() != dim_) throw ContractError("/embed vector has the wrong dimension");
        EmbeddingVector v(static_cast<Eigen::Index>(dim_));
        for (std::size_t i = 0; i < dim_; ++i) {
            if (!row[i].is_number()) throw ContractError("/embed vector holds a non-number");
            v[static_cast<Eigen::Index>(i)] = row[i].get<double>();
        }
        if (!v.allFinite()) throw ContractError("/embed vector holds a non-finite value");
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------

EmbeddingVector CachingProvider::embed(std::string_view text, Side side) const {
    {
        std::lock_guard lock(mutex_);
        auto it = memo_.find(std::pair<Side, std::string>(side, text));
        if (it != memo_.end()) return it->second;
    }
    EmbeddingVector v = inner_.embed(text, side);
    std::lock_guard lock(mutex_);
    return memo_.emplace(std::pair<Side, std::string>(side, text), std::move(v)).first->second;
}

// ---------------------------------------------------------------------------

EmbeddingProviderSpec EmbeddingProviderSpec::parse(std::string_view text, std::size_t dim, std::uint64_t seed) {
    EmbeddingProviderSpec spec;
    spec.dim = dim;
    spec.seed = seed;
    if (text == "hash" || text.empty()) return spec;
    constexpr std::string_view prefix = "remote:";
    if (text.starts_with(prefix)) {
        spec.kind = Kind::Remote;
        spec.endpoint = std::string(text.substr(prefix.size()));
        if (spec.endpoint.empty()) throw ConfigError("remote embedder requires an endpoint");
        return spec;
    }
    throw ConfigError("unknown embedder: " + std::string(text));
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderSpec& spec) {
    if (spec.kind == EmbeddingProviderSpec::Kind::Remote) {
        return std::make_unique<RemoteEmbedder>(spec.endpoint, spec.dim);
    }
    return std::make_unique<HashEmbedder>(spec.dim, spec.seed);
}

// ---------------------------------------------------------------------------

ProjectionHead ProjectionHead::identity(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return ProjectionHead{Matrix::Identity(n, n), Matrix::Identity(n, n)};
}

void ProjectionHead::validate() const {
    if (query.rows() != query.cols() || passage.rows() != passage.cols() || query.rows() != passage.rows()) {
        throw ContractError("projection head matrices must be square and of equal size");
    }
    if (!query.allFinite() || !passage.allFinite()) throw ContractError("projection head holds non-finite entries");
}

void write_head(std::ostream& out, const ProjectionHead& head) {
    head.validate();
    for (Side side : {Side::Query, Side::Passage}) {
        const Matrix& m = head.side(side);
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
        out << json{{"dim", head.dim()}, {"side", to_string(side)}, {"values", values}}.dump() << '\n';
    }
}

ProjectionHead read_head(std::istream& in) {
    ProjectionHead head;
    bool have_query = false;
    bool have_passage = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ContractError(std::string("malformed head checkpoint: ") + e.what());
        }
        if (!rec.contains("dim") || !rec.contains("side") || !rec.contains("values")) {
            throw ContractError("head checkpoint record needs dim, side and values");
        }
        const auto dim = rec["dim"].get<std::size_t>();
        const auto side_name = rec["side"].get<std::string>();
        const auto values = rec["values"].get<std::vector<double>>();
        if (values.size() != dim * dim) throw ContractError("head checkpoint values do not match dim");
        Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < values.size(); ++i) {
            m(static_cast<Eigen::Index>(i / dim), static_cast<Eigen::Index>(i % dim)) = values[i];
        }
        if (side_name == "query") {
            head.query = std::move(m);
            have_query = true;
        } else if (side_name == "passage") {
            head.passage = std::move(m);
            have_passage = true;
        } else {
            throw ContractError("unknown head side: " + side_name);
        }
    }
    if (!have_query || !have_passage) throw ContractError("head checkpoint needs both query and passage records");
    head.validate();
    return head;
}

void save_head(const std::filesystem::path& path, const ProjectionHead& head) {
    std::ofstream out(path);
    if (!out) throw LookupError("cannot write " + path.string());
    write_head(out, head);
}

ProjectionHead load_head(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open " + path.string());
    return read_head(in);
}

namespace {

EmbeddingVector project(const EmbeddingProvider& provider, const Matrix& w, std::string_view text, Side side) {
    EmbeddingVector base = provider.embed(text, side);
    if (static_cast<std::size_t>(base.size()) != provider.dim() || base.size() != w.cols()) {
        throw ContractError("embedding dimension " + std::to_string(base.size()) + " does not match head dimension " +
                            std::to_string(w.cols()));
    }
    return w * base;
}

}  // namespace

EmbeddingVector embed_query(const EmbeddingProvider& provider, const ProjectionHead& head, std::string_view text) {
    return project(provider, head.query, text, Side::Query);
}

EmbeddingVector embed_passage(const EmbeddingProvider& provider, const ProjectionHead& head,
                              std::string_view text) {
    return project(provider, head.passage, text, Side::Passage);
}

std::string concat_query(std::string_view passage_text, std::string_view question_text) {
    std::string out;
    out.reserve(passage_text.size() + question_text.size() + kSeparatorToken.size() + 2);
    if (!passage_text.empty()) {
        out += passage_text;
        out += ' ';
    }
    out += kSeparatorToken;
    if (!question_text.empty()) {
        out += ' ';
        out += question_text;
    }
    return out;
}

}  // namespace adapcr
