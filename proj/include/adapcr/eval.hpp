#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"
#include "adapcr/lmscore.hpp"
#include "adapcr/retrieval.hpp"

namespace adapcr {

/// SQuAD-style: lowercase, strip punctuation, drop a/an/the, collapse spaces.
std::string normalize_answer(std::string_view s);
std::vector<std::string> normalized_tokens(std::string_view s);

/// 1 iff the normalized prediction equals some normalized gold answer.
int exact_match(std::string_view prediction, const std::vector<std::string>& golds);

/// Max over golds of token-multiset F1 on normalized tokens.
double answer_f1(std::string_view prediction, const std::vector<std::string>& golds);

struct MetricResult {
    double em = 0.0;
    double f1 = 0.0;
    std::size_t n_examples = 0;
    std::string system_label;
};

struct PredictionRecord {
    std::size_t question_idx = 0;
    std::string predicted;
    Combination winner;
    std::vector<std::string> gold;
};

MetricResult evaluate_system(const std::vector<PredictionRecord>& predictions, std::string system_label = {});

/// Desk-scale reader: the first gold answer (in listed order) whose
/// normalized tokens all occur in the context; otherwise the covered
/// tokens of the primary gold answer, in order.
std::string mock_read_answer(const std::vector<std::string>& context_passages, const std::vector<std::string>& golds);

/// Fixed top-k independent retrieval arm (k_out passages by single score).
Combination baseline_fixed_topk(const Retriever& retriever, std::string_view question,
                                std::span<const Passage> subcorpus, std::size_t k_out = 2);

enum class SystemKind { NoRetrieval, FixedTop2, AdaPcr, AdaPcrRerank };

const char* to_string(SystemKind kind) noexcept;
SystemKind parse_system(std::string_view name);
/// Table row label, e.g. "AdaPCR (Rerank)".
const char* display_name(SystemKind kind) noexcept;

struct SystemReport {
    SystemKind kind = SystemKind::AdaPcr;
    MetricResult metrics;
    double mean_winner_log_likelihood = 0.0;
    /// Questions whose winner contains every planted gold passage (when truth is given).
    std::size_t gold_hits = 0;
    std::vector<PredictionRecord> predictions;
};

struct ComparisonReport {
    std::vector<SystemReport> systems;
    std::size_t n_examples = 0;
    bool has_truth = false;
};

struct CompareOptions {
    std::vector<SystemKind> systems{SystemKind::NoRetrieval, SystemKind::FixedTop2, SystemKind::AdaPcr,
                                    SystemKind::AdaPcrRerank};
    RetrievalConfig retrieval;
};

/// Runs every configured system over the dataset. Examples need their
/// sub-corpus ids filled in. `truth` maps question index to planted
/// gold ids and may be empty.
ComparisonReport compare_systems(const std::vector<QAExample>& dataset, const Corpus& corpus,
                                 const EmbeddingProvider& provider, const ProjectionHead& identity_head,
                                 const ProjectionHead& trained_head, const AnswerScorer& scorer, ScoreCache& cache,
                                 const CompareOptions& options,
                                 const std::map<std::size_t, std::vector<std::string>>& truth = {});

void write_report_json(std::ostream& out, const ComparisonReport& report);
void write_report_markdown(std::ostream& out, const ComparisonReport& report);

}  // namespace adapcr
