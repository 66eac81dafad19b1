#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "adapcr/corpus.hpp"
#include "adapcr/retrieval.hpp"

namespace adapcr {

/// log P_LM(y | [d; x]) of a whole answer, with its token count.
struct LmScore {
    double log_likelihood = 0.0;
    std::size_t token_count = 1;

    double probability() const { return std::exp(log_likelihood); }
    bool operator==(const LmScore&) const = default;
};

struct ScoreRequest {
    std::vector<std::string> context_passages;
    std::string question;
    std::string answer;
};

/// A frozen, black-box answer-likelihood scorer.
class AnswerScorer {
public:
    virtual ~AnswerScorer() = default;
    virtual LmScore score(const ScoreRequest& request) const = 0;
};

/// Token-coverage stand-in for a reader LM. Each answer token gets
/// probability eps + (1 - 2 eps) * covered, where "covered" means the
/// token occurs in the context passages or the question.
class MockScorer final : public AnswerScorer {
public:
    explicit MockScorer(double epsilon = 0.05);

    LmScore score(const ScoreRequest& request) const override;

    /// Per-answer-token log probabilities, in answer order.
    std::vector<double> token_log_probs(const ScoreRequest& request) const;
    double epsilon() const noexcept { return epsilon_; }

private:
    double epsilon_;
};

LmScore mock_lm_score(const ScoreRequest& request, double epsilon = 0.05);

/// Client for POST /score. Transport failures are retried with
/// exponential backoff; replies are validated before use.
class RemoteScorer final : public AnswerScorer {
public:
    explicit RemoteScorer(std::string endpoint, int max_attempts = 3, int backoff_ms = 50);

    LmScore score(const ScoreRequest& request) const override;

private:
    std::string endpoint_;
    int max_attempts_;
    int backoff_ms_;
};

LmScore remote_lm_score(const std::string& endpoint, const ScoreRequest& request);

/// Parses "mock" or "remote:URL".
std::unique_ptr<AnswerScorer> make_scorer(std::string_view spec);

/// Counts calls to an inner scorer.
class CountingScorer final : public AnswerScorer {
public:
    explicit CountingScorer(const AnswerScorer& inner) : inner_(inner) {}

    LmScore score(const ScoreRequest& request) const override;
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    const AnswerScorer& inner_;
    mutable std::atomic<std::size_t> calls_{0};
};

struct ScoreKey {
    std::vector<std::string> passage_ids;
    std::size_t question_idx = 0;
    std::string answer;

    auto operator<=>(const ScoreKey&) const = default;
};

/// Persistent memo of scorer results. Writes are serialized.
class ScoreCache {
public:
    ScoreCache() = default;
    explicit ScoreCache(std::filesystem::path backing_file) : backing_file_(std::move(backing_file)) {}

    std::optional<LmScore> lookup(const ScoreKey& key) const;
    void insert(const ScoreKey& key, const LmScore& score);
    std::size_t size() const;

    /// JSONL: {"passage_ids", "question_idx", "answer", "log_likelihood", "token_count"}.
    void write(std::ostream& out) const;
    void read(std::istream& in);
    /// No-ops without a backing file; load() also tolerates a missing file.
    void load();
    void save() const;

    std::map<ScoreKey, LmScore> snapshot() const;

private:
    std::optional<std::filesystem::path> backing_file_;
    mutable std::mutex mutex_;
    std::map<ScoreKey, LmScore> entries_;
};

using ScoredCandidate = std::pair<Combination, LmScore>;

/// Builds the scorer request for a combination: passage texts in
/// combination order, the question and the primary gold answer.
ScoreRequest make_request(const Combination& combination, const Corpus& corpus, const QAExample& example);

/// Scores one combination through the cache.
LmScore score_combination(const Combination& combination, const Corpus& corpus, const QAExample& example,
                          std::size_t question_idx, const AnswerScorer& scorer, ScoreCache& cache);

/// Scores every candidate in canonical order. Cache hits skip the scorer;
/// misses are written back only if the whole pool scored successfully.
std::vector<ScoredCandidate> score_pool(const CandidateSet& candidates, const QAExample& example,
                                        std::size_t question_idx, const Corpus& corpus, const AnswerScorer& scorer,
                                        ScoreCache& cache);

}  // namespace adapcr
