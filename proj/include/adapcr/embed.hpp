#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace adapcr {

using EmbeddingVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Side { Query, Passage };

const char* to_string(Side side) noexcept;

/// Source of base (pre-projection) embeddings.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed(std::string_view text, Side side) const = 0;

    /// Batched form; the default loops over embed().
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts, Side side) const;
};

/// Signed feature hashing over tokenize() output, L2-normalized.
/// The empty text maps to the zero vector.
class HashEmbedder final : public EmbeddingProvider {
public:
    explicit HashEmbedder(std::size_t dim, std::uint64_t seed = 0);

    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text, Side side) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

EmbeddingVector deterministic_hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed = 0);

/// Client for POST /embed returning {"vectors": [[...]], "dim": n}.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(std::string endpoint, std::size_t dim, int max_attempts = 3, int backoff_ms = 50);

    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text, Side side) const override;
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts, Side side) const override;

private:
    std::string endpoint_;
    std::size_t dim_;
    int max_attempts_;
    int backoff_ms_;
};

/// Memoizes another provider's outputs by (side, text). Thread-safe.
class CachingProvider final : public EmbeddingProvider {
public:
    explicit CachingProvider(const EmbeddingProvider& inner) : inner_(inner) {}

    std::size_t dim() const override { return inner_.dim(); }
    EmbeddingVector embed(std::string_view text, Side side) const override;

private:
    const EmbeddingProvider& inner_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<Side, std::string>, EmbeddingVector, std::less<>> memo_;
};

struct EmbeddingProviderSpec {
    enum class Kind { DeterministicHash, Remote };
    Kind kind = Kind::DeterministicHash;
    std::size_t dim = 256;
    std::string endpoint;
    std::uint64_t seed = 0;

    /// Parses "hash" or "remote:URL".
    static EmbeddingProviderSpec parse(std::string_view text, std::size_t dim, std::uint64_t seed = 0);
};

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderSpec& spec);

/// Trainable linear maps applied on top of the frozen provider embeddings.
struct ProjectionHead {
    Matrix query;
    Matrix passage;

    static ProjectionHead identity(std::size_t dim);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(query.rows()); }
    const Matrix& side(Side s) const noexcept { return s == Side::Query ? query : passage; }
    Matrix& side(Side s) noexcept { return s == Side::Query ? query : passage; }

    /// Throws ContractError unless both matrices are square, equal-sized and finite.
    void validate() const;

    bool operator==(const ProjectionHead&) const = default;
};

/// Two JSONL records, {"dim", "side", "values": row-major}.
void write_head(std::ostream& out, const ProjectionHead& head);
ProjectionHead read_head(std::istream& in);
void save_head(const std::filesystem::path& path, const ProjectionHead& head);
ProjectionHead load_head(const std::filesystem::path& path);

EmbeddingVector embed_query(const EmbeddingProvider& provider, const ProjectionHead& head, std::string_view text);
EmbeddingVector embed_passage(const EmbeddingProvider& provider, const ProjectionHead& head, std::string_view text);

inline constexpr std::string_view kSeparatorToken = "[SEP]";

/// Passage first, then the separator, then the question.
std::string concat_query(std::string_view passage_text, std::string_view question_text);

}  // namespace adapcr
