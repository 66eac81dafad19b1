#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"

namespace adapcr {

enum class Stage { Single, Pair };

/// One or two passages with the relevance score that ranked them.
struct Combination {
    std::vector<std::string> passage_ids;
    double score = 0.0;
    Stage stage = Stage::Single;

    static Combination single(std::string id, double score);
    static Combination pair(std::string first, std::string second, double score);

    std::size_t size() const noexcept { return passage_ids.size(); }
    /// Throws ContractError if the length/stage/duplicate invariants fail.
    void validate(bool allow_self_pair = false) const;

    bool operator==(const Combination&) const = default;
};

/// D = D1 ∪ D2 for one question, singles before pairs.
struct CandidateSet {
    std::string question;
    std::vector<Combination> singles;
    std::vector<Combination> pairs;

    std::size_t size() const noexcept { return singles.size() + pairs.size(); }
    bool empty() const noexcept { return size() == 0; }
    /// Canonical order: singles by rank, then pairs by (i, j) rank.
    const Combination& operator[](std::size_t i) const { return i < singles.size() ? singles[i] : pairs[i - singles.size()]; }
    std::vector<Combination> all() const;

    bool operator==(const CandidateSet&) const = default;
};

struct RetrievalConfig {
    std::size_t k = 5;
    std::size_t subcorpus_limit = 100;
    bool dedupe_self_pairs = true;

    void validate() const;
};

/// Cosine similarity clamped to [-1, 1]; 0 when either side is the zero vector.
double score_single(const EmbeddingVector& query, const EmbeddingVector& passage);
bool is_degenerate(const EmbeddingVector& query, const EmbeddingVector& passage);

CandidateSet assemble_candidates(std::string question, std::vector<Combination> d1, std::vector<Combination> d2);

/// Highest score; ties go to the earlier combination in canonical order,
/// so singles win ties against pairs.
const Combination& select_best(const CandidateSet& candidates);

struct RetrievalResult {
    Combination winner;
    CandidateSet candidates;
};

/// The two-stage combination retriever over a pre-retrieved sub-corpus.
class Retriever {
public:
    Retriever(const EmbeddingProvider& provider, const ProjectionHead& head, RetrievalConfig config = {});
    /// Identity head: scores the provider's embeddings directly.
    Retriever(const EmbeddingProvider& provider, RetrievalConfig config);

    std::vector<Combination> first_stage(std::string_view question, std::span<const Passage> subcorpus) const;
    std::vector<Combination> second_stage(std::string_view question, std::span<const Combination> d1,
                                          std::span<const Passage> subcorpus) const;
    RetrievalResult retrieve(std::string_view question, std::span<const Passage> subcorpus) const;

    /// The top-2 first-stage passages as one combination (fixed top-k arm).
    Combination fixed_topk(std::string_view question, std::span<const Passage> subcorpus, std::size_t k_out = 2) const;

    const RetrievalConfig& config() const noexcept { return config_; }
    const EmbeddingProvider& provider() const noexcept { return provider_; }
    /// Null for the identity-head form.
    const ProjectionHead* head() const noexcept { return head_; }

private:
    EmbeddingVector query_vector(std::string_view text) const;
    EmbeddingVector passage_vector(std::string_view text) const;
    std::vector<EmbeddingVector> passage_embeddings(std::span<const Passage> subcorpus) const;
    std::vector<Combination> first_stage_impl(std::string_view question, std::span<const Passage> subcorpus,
                                              const std::vector<EmbeddingVector>& passages) const;
    std::vector<Combination> second_stage_impl(std::string_view question, std::span<const Combination> d1,
                                               std::span<const Passage> subcorpus,
                                               const std::vector<EmbeddingVector>& passages) const;

    const EmbeddingProvider& provider_;
    const ProjectionHead* head_;
    RetrievalConfig config_;
};

/// BM25 pre-retrieval (or the cached sub-corpus when present) followed by
/// the two-stage retriever.
RetrievalResult retrieve(const Retriever& retriever, const Corpus& corpus, const Bm25Index& index,
                         const QAExample& example);

}  // namespace adapcr
