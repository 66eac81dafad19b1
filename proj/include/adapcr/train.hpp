#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"
#include "adapcr/lmscore.hpp"
#include "adapcr/retrieval.hpp"

namespace adapcr {

enum class LossKind { Rag, Kl, Ce };

const char* to_string(LossKind kind) noexcept;
LossKind parse_loss(std::string_view name);

/// What other batch members contribute as negatives: their winning
/// passages as singles, or their winning combinations as-is.
enum class NegativeSource { Passages, Combinations };

const char* to_string(NegativeSource source) noexcept;
NegativeSource parse_negative_source(std::string_view name);

struct TrainingConfig {
    LossKind loss = LossKind::Rag;
    double gamma = 0.1;         // retriever softmax temperature
    double beta = 1.0;          // LM-side temperature for the KL loss
    std::size_t top_k_marginal = 5;
    double learning_rate = 1e-2;
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    bool in_batch_negatives = true;
    NegativeSource negative_source = NegativeSource::Passages;
    /// Forces at least one single and one pair into the RAG marginal set.
    bool balance_stages = false;

    void validate() const;
};

/// Softmax of scores / gamma over one candidate pool.
struct RetrieverDistribution {
    std::vector<double> probabilities;
    std::vector<double> log_probabilities;
    double gamma = 1.0;
};

RetrieverDistribution normalize_pret(std::span<const double> scores, double gamma);

/// Loss of one pool and its derivative with respect to the raw scores.
struct PoolLoss {
    double loss = 0.0;
    std::vector<double> d_scores;
    bool clamped = false;  // RAG marginal fell below 1e-300
};

/// `stages` may be empty; it is only consulted when balance_stages is set.
PoolLoss pool_loss(LossKind kind, std::span<const double> scores, std::span<const double> log_likelihoods,
                   const TrainingConfig& config, std::span<const Stage> stages = {});

/// Indices of the candidates entering the RAG marginal, highest P_ret first.
std::vector<std::size_t> marginal_set(std::span<const double> probabilities, std::size_t top_k,
                                      std::span<const Stage> stages = {}, bool balance_stages = false);

/// A scored candidate pool with the LM likelihood of the gold answer per candidate.
struct TrainingExample {
    QAExample example;
    CandidateSet pool;
    std::vector<LmScore> lm_scores;

    void validate() const;
};

double rag_loss(std::span<const TrainingExample> batch, const TrainingConfig& config);
double kl_loss(std::span<const TrainingExample> batch, const TrainingConfig& config);
double ce_loss(std::span<const TrainingExample> batch, const TrainingConfig& config);
double batch_loss(std::span<const TrainingExample> batch, const TrainingConfig& config);

/// Frozen inputs of one candidate: base query/passage embeddings and the
/// candidate's answer log-likelihood. Its score is cos(Wq a, Wd b).
struct CandidateFeatures {
    EmbeddingVector query_base;
    EmbeddingVector passage_base;
    double log_likelihood = 0.0;
    Stage stage = Stage::Single;
};

using ExampleFeatures = std::vector<CandidateFeatures>;

/// Base embeddings for a combination asked with `question`: singles use the
/// question as the query; pairs use concat_query(first passage, question).
CandidateFeatures featurize(const Combination& combination, std::string_view question, const Corpus& corpus,
                            const EmbeddingProvider& provider, double log_likelihood);

std::vector<double> candidate_scores(const ExampleFeatures& features, const ProjectionHead& head);

struct HeadGradient {
    Matrix query;
    Matrix passage;
};

struct LossAndGradient {
    double loss = 0.0;
    HeadGradient gradient;
    std::size_t clamped = 0;
};

double features_loss(std::span<const ExampleFeatures> batch, const ProjectionHead& head, const TrainingConfig& config);

/// Analytic gradient of the summed batch loss with respect to (Wq, Wd).
/// LM likelihoods are constants.
LossAndGradient grad_loss(std::span<const ExampleFeatures> batch, const ProjectionHead& head,
                          const TrainingConfig& config);

struct GradientReport {
    LossKind loss = LossKind::Rag;
    std::vector<double> analytic;  // Wq row-major, then Wd row-major
    std::vector<double> numeric;
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor of the per-coordinate relative error.
    double rel_floor = 1e-6;
    /// Test hook: perturbs the analytic gradient so the check must fail.
    bool corrupt = false;
};

GradientReport gradcheck(std::span<const ExampleFeatures> batch, const ProjectionHead& head,
                         const TrainingConfig& config, const GradCheckOptions& options = {});

/// Seeded random batch for gradient checks: `dim`-dimensional Gaussian
/// features, `pool` candidates per example, log-likelihoods in [-6, -0.05],
/// and a head perturbed away from identity.
struct RandomBatch {
    std::vector<ExampleFeatures> batch;
    ProjectionHead head;
};

RandomBatch random_batch(std::size_t dim, std::size_t pool, std::size_t batch_size, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct FilterResult {
    std::vector<std::size_t> retained;  // indices into the input dataset
    std::size_t dropped = 0;
};

/// True when some gold answer's normalized tokens occur as a contiguous run
/// in some passage's normalized tokens.
bool answer_in_passages(const QAExample& example, const Corpus& corpus);

/// Keeps only examples whose answer occurs in their sub-corpus.
FilterResult positive_filter(const std::vector<QAExample>& dataset, const Corpus& corpus);

/// Seeded shuffle of [0, n) cut into batches. A batch size larger than n
/// yields one batch of n.
std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     std::size_t epoch = 0);

struct PreparedExample {
    std::size_t question_idx = 0;
    TrainingExample data;
    Combination winner;
    ExampleFeatures features;
};

/// Negatives for one batch member drawn from the other members' winners,
/// skipping anything already in its pool.
std::vector<Combination> in_batch_negatives(std::span<const PreparedExample> prepared,
                                            std::span<const std::size_t> batch, std::size_t member,
                                            NegativeSource source = NegativeSource::Passages);

struct EpochStat {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::size_t retained_examples = 0;
};

struct TrainResult {
    ProjectionHead head;
    std::vector<EpochStat> curve;  // epoch 0 is the initial head
    std::size_t retained = 0;
    std::size_t dropped = 0;
    std::size_t clamped = 0;
};

void write_loss_curve(std::ostream& out, const std::vector<EpochStat>& curve);

/// Gradient-descent trainer for the projection head. Pools are built once
/// with the initial head and scored through the cache.
class Trainer {
public:
    Trainer(const Corpus& corpus, const EmbeddingProvider& provider, const AnswerScorer& scorer, ScoreCache& cache,
            RetrievalConfig retrieval, TrainingConfig config);

    /// Pre-retrieves missing sub-corpora, filters, and builds scored pools.
    std::vector<PreparedExample> prepare(const std::vector<QAExample>& dataset, const ProjectionHead& head,
                                         FilterResult* filter = nullptr) const;

    /// Mean per-example loss over own pools (no negatives) under `head`.
    double evaluate(std::span<const PreparedExample> prepared, const ProjectionHead& head) const;

    TrainResult train(const std::vector<QAExample>& dataset, ProjectionHead head) const;
    TrainResult train_prepared(std::span<const PreparedExample> prepared, ProjectionHead head) const;

    /// Called after every epoch; used for logging.
    std::function<void(const EpochStat&)> on_epoch;

private:
    ExampleFeatures batch_features(std::span<const PreparedExample> prepared, std::span<const std::size_t> batch,
                                   std::size_t member) const;

    const Corpus& corpus_;
    CachingProvider provider_;
    const AnswerScorer& scorer_;
    ScoreCache& cache_;
    RetrievalConfig retrieval_;
    TrainingConfig config_;
};

}  // namespace adapcr
