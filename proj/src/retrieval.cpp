#include "adapcr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adapcr/error.hpp"

namespace adapcr {

Combination Combination::single(std::string id, double score) {
    return Combination{{std::move(id)}, score, Stage::Single};
}

Combination Combination::pair(std::string first, std::string second, double score) {
    return Combination{{std::move(first), std::move(second)}, score, Stage::Pair};
}

void Combination::validate(bool allow_self_pair) const {
    if (passage_ids.empty() || passage_ids.size() > 2) throw ContractError("combination must hold 1 or 2 passages");
    if ((stage == Stage::Single) != (passage_ids.size() == 1)) throw ContractError("combination stage mismatch");
    if (!allow_self_pair && passage_ids.size() == 2 && passage_ids[0] == passage_ids[1]) {
        throw ContractError("pair repeats passage " + passage_ids[0]);
    }
}

std::vector<Combination> CandidateSet::all() const {
    std::vector<Combination> out;
    out.reserve(size());
    out.insert(out.end(), singles.begin(), singles.end());
    out.insert(out.end(), pairs.begin(), pairs.end());
    return out;
}

void RetrievalConfig::validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (subcorpus_limit == 0) throw ConfigError("subcorpus_limit must be positive");
    if (k > subcorpus_limit) throw ConfigError("k must not exceed subcorpus_limit");
}

bool is_degenerate(const EmbeddingVector& query, const EmbeddingVector& passage) {
    return query.squaredNorm() == 0.0 || passage.squaredNorm() == 0.0;
}

double score_single(const EmbeddingVector& query, const EmbeddingVector& passage) {
    if (query.size() != passage.size()) throw ContractError("cosine of vectors with different dimensions");
    const double nq = query.norm();
    const double np = passage.norm();
    if (nq == 0.0 || np == 0.0) return 0.0;
    return std::clamp(query.dot(passage) / (nq * np), -1.0, 1.0);
}

CandidateSet assemble_candidates(std::string question, std::vector<Combination> d1, std::vector<Combination> d2) {
    for (const auto& c : d1) {
        c.validate();
        if (c.stage != Stage::Single) throw ContractError("first-stage candidates must be singles");
    }
    // Self-pairs only exist when dedupe_self_pairs is off; accept them here.
    for (const auto& c : d2) {
        c.validate(/*allow_self_pair=*/true);
        if (c.stage != Stage::Pair) throw ContractError("second-stage candidates must be pairs");
    }
    if (d2.size() > d1.size() * d1.size()) throw ContractError("more pairs than k x k");
    return CandidateSet{std::move(question), std::move(d1), std::move(d2)};
}

const Combination& select_best(const CandidateSet& candidates) {
    if (candidates.empty()) throw PreconditionError("select_best on an empty candidate set");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates[i].score > candidates[best].score) best = i;
    }
    return candidates[best];
}

// ---------------------------------------------------------------------------

namespace {

struct Ranked {
    double score;
    std::size_t index;
};

// Descending score, ascending passage id on ties.
std::vector<Ranked> rank_passages(const EmbeddingVector& query, std::span<const Passage> subcorpus,
                                  const std::vector<EmbeddingVector>& passages) {
    std::vector<Ranked> ranked;
    ranked.reserve(subcorpus.size());
    for (std::size_t i = 0; i < subcorpus.size(); ++i) ranked.push_back({score_single(query, passages[i]), i});
    std::sort(ranked.begin(), ranked.end(), [&](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        return subcorpus[a.index].id < subcorpus[b.index].id;
    });
    return ranked;
}

const Passage& find_passage(std::span<const Passage> subcorpus, const std::string& id) {
    auto it = std::find_if(subcorpus.begin(), subcorpus.end(), [&](const Passage& p) { return p.id == id; });
    if (it == subcorpus.end()) throw LookupError("passage " + id + " is not in the sub-corpus");
    return *it;
}

}  // namespace

Retriever::Retriever(const EmbeddingProvider& provider, const ProjectionHead& head, RetrievalConfig config)
    : provider_(provider), head_(&head), config_(config) {
    config_.validate();
    head.validate();
    if (head.dim() != provider_.dim()) throw ContractError("head and provider dimensions differ");
}

Retriever::Retriever(const EmbeddingProvider& provider, RetrievalConfig config)
    : provider_(provider), head_(nullptr), config_(config) {
    config_.validate();
}

EmbeddingVector Retriever::query_vector(std::string_view text) const {
    return head_ ? embed_query(provider_, *head_, text) : provider_.embed(text, Side::Query);
}

EmbeddingVector Retriever::passage_vector(std::string_view text) const {
    return head_ ? embed_passage(provider_, *head_, text) : provider_.embed(text, Side::Passage);
}

std::vector<EmbeddingVector> Retriever::passage_embeddings(std::span<const Passage> subcorpus) const {
    std::vector<EmbeddingVector> out;
    out.reserve(subcorpus.size());
    for (const Passage& p : subcorpus) out.push_back(passage_vector(p.text));
    return out;
}

std::vector<Combination> Retriever::first_stage_impl(std::string_view question, std::span<const Passage> subcorpus,
                                                     const std::vector<EmbeddingVector>& passages) const {
    const EmbeddingVector q = query_vector(question);
    const auto ranked = rank_passages(q, subcorpus, passages);
    const std::size_t n = std::min(config_.k, ranked.size());
    std::vector<Combination> d1;
    d1.reserve(n);
    for (std::size_t r = 0; r < n; ++r) d1.push_back(Combination::single(subcorpus[ranked[r].index].id, ranked[r].score));
    return d1;
}

std::vector<Combination> Retriever::second_stage_impl(std::string_view question, std::span<const Combination> d1,
                                                      std::span<const Passage> subcorpus,
                                                      const std::vector<EmbeddingVector>& passages) const {
    std::vector<Combination> d2;
    for (const Combination& head_single : d1) {
        const std::string& first_id = head_single.passage_ids.front();
        const Passage& first = find_passage(subcorpus, first_id);
        const EmbeddingVector q = query_vector(concat_query(first.text, question));
        std::size_t taken = 0;
        for (const Ranked& r : rank_passages(q, subcorpus, passages)) {
            if (taken == config_.k) break;
            const std::string& second_id = subcorpus[r.index].id;
            if (second_id == first_id && config_.dedupe_self_pairs) continue;
            d2.push_back(Combination{{first_id, second_id}, r.score, Stage::Pair});
            ++taken;
        }
    }
    return d2;
}

std::vector<Combination> Retriever::first_stage(std::string_view question, std::span<const Passage> subcorpus) const {
    if (subcorpus.empty()) throw PreconditionError("first_stage over an empty sub-corpus");
    return first_stage_impl(question, subcorpus, passage_embeddings(subcorpus));
}

std::vector<Combination> Retriever::second_stage(std::string_view question, std::span<const Combination> d1,
                                                 std::span<const Passage> subcorpus) const {
    return second_stage_impl(question, d1, subcorpus, passage_embeddings(subcorpus));
}

RetrievalResult Retriever::retrieve(std::string_view question, std::span<const Passage> subcorpus) const {
    if (subcorpus.empty()) throw PreconditionError("retrieve over an empty sub-corpus");
    const auto passages = passage_embeddings(subcorpus);
    auto d1 = first_stage_impl(question, subcorpus, passages);
    auto d2 = second_stage_impl(question, d1, subcorpus, passages);
    CandidateSet candidates{std::string(question), std::move(d1), std::move(d2)};
    Combination winner = select_best(candidates);
    return RetrievalResult{std::move(winner), std::move(candidates)};
}

Combination Retriever::fixed_topk(std::string_view question, std::span<const Passage> subcorpus,
                                  std::size_t k_out) const {
    if (subcorpus.empty()) throw PreconditionError("fixed_topk over an empty sub-corpus");
    if (k_out == 0 || k_out > 2) throw ConfigError("fixed top-k arm supports 1 or 2 passages");
    const EmbeddingVector q = query_vector(question);
    const auto ranked = rank_passages(q, subcorpus, passage_embeddings(subcorpus));
    if (ranked.size() == 1 || k_out == 1) return Combination::single(subcorpus[ranked[0].index].id, ranked[0].score);
    // Score of the pair is the mean of its members' independent scores.
    return Combination::pair(subcorpus[ranked[0].index].id, subcorpus[ranked[1].index].id,
                             0.5 * (ranked[0].score + ranked[1].score));
}

RetrievalResult retrieve(const Retriever& retriever, const Corpus& corpus, const Bm25Index& index,
                         const QAExample& example) {
    QAExample resolved = example;
    if (resolved.subcorpus_ids.empty()) {
        resolved.subcorpus_ids = preretrieve_subcorpus(index, example.question, retriever.config().subcorpus_limit);
    }
    const auto subcorpus = resolve_subcorpus(corpus, resolved);
    return retriever.retrieve(example.question, subcorpus);
}

}  // namespace adapcr
