#include "adapcr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "adapcr/error.hpp"
#include "json.hpp"

namespace adapcr {

using json = nlohmann::json;

std::vector<std::string> normalized_tokens(std::string_view s) {
    auto tokens = tokenize(s);
    std::erase_if(tokens, [](const std::string& t) { return t == "a" || t == "an" || t == "the"; });
    return tokens;
}

std::string normalize_answer(std::string_view s) {
    std::string out;
    for (const auto& t : normalized_tokens(s)) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

int exact_match(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw PreconditionError("exact_match needs at least one gold answer");
    const std::string pred = normalize_answer(prediction);
    for (const auto& g : golds) {
        if (normalize_answer(g) == pred) return 1;
    }
    return 0;
}

namespace {

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string_view, long> counts;
    for (const auto& t : gold) ++counts[t];
    long common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double answer_f1(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw PreconditionError("answer_f1 needs at least one gold answer");
    const auto pred = normalized_tokens(prediction);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_f1(pred, normalized_tokens(g)));
    return best;
}

MetricResult evaluate_system(const std::vector<PredictionRecord>& predictions, std::string system_label) {
    if (predictions.empty()) throw PreconditionError("evaluate_system needs at least one prediction");
    double em = 0.0;
    double f1 = 0.0;
    for (const auto& p : predictions) {
        em += exact_match(p.predicted, p.gold);
        f1 += answer_f1(p.predicted, p.gold);
    }
    const auto n = static_cast<double>(predictions.size());
    return MetricResult{em / n, f1 / n, predictions.size(), std::move(system_label)};
}

std::string mock_read_answer(const std::vector<std::string>& context_passages, const std::vector<std::string>& golds) {
    if (golds.empty()) throw PreconditionError("mock reader needs a gold answer");
    std::unordered_set<std::string> visible;
    for (const auto& p : context_passages)
        for (auto& t : normalized_tokens(p)) visible.insert(std::move(t));
    for (const auto& g : golds) {
        const auto tokens = normalized_tokens(g);
        if (!tokens.empty() && std::all_of(tokens.begin(), tokens.end(), [&](const auto& t) { return visible.contains(t); })) {
            return g;
        }
    }
    std::string partial;
    for (const auto& t : normalized_tokens(golds.front())) {
        if (!visible.contains(t)) continue;
        if (!partial.empty()) partial += ' ';
        partial += t;
    }
    return partial;
}

Combination baseline_fixed_topk(const Retriever& retriever, std::string_view question,
                                std::span<const Passage> subcorpus, std::size_t k_out) {
    return retriever.fixed_topk(question, subcorpus, k_out);
}

// ---------------------------------------------------------------------------

const char* to_string(SystemKind kind) noexcept {
    switch (kind) {
        case SystemKind::NoRetrieval: return "no_retrieval";
        case SystemKind::FixedTop2: return "fixed_top2";
        case SystemKind::AdaPcr: return "adapcr";
        case SystemKind::AdaPcrRerank: return "adapcr_rerank";
    }
    return "unknown";
}

const char* display_name(SystemKind kind) noexcept {
    switch (kind) {
        case SystemKind::NoRetrieval: return "No Retrieval";
        case SystemKind::FixedTop2: return "Fixed top-2 (IC-RALM style)";
        case SystemKind::AdaPcr: return "AdaPCR";
        case SystemKind::AdaPcrRerank: return "AdaPCR (Rerank)";
    }
    return "unknown";
}

SystemKind parse_system(std::string_view name) {
    for (SystemKind k : {SystemKind::NoRetrieval, SystemKind::FixedTop2, SystemKind::AdaPcr, SystemKind::AdaPcrRerank}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown system: " + std::string(name));
}

ComparisonReport compare_systems(const std::vector<QAExample>& dataset, const Corpus& corpus,
                                 const EmbeddingProvider& provider, const ProjectionHead& identity_head,
                                 const ProjectionHead& trained_head, const AnswerScorer& scorer, ScoreCache& cache,
                                 const CompareOptions& options,
                                 const std::map<std::size_t, std::vector<std::string>>& truth) {
    if (dataset.empty()) throw PreconditionError("compare_systems needs a non-empty dataset");
    const Retriever base(provider, identity_head, options.retrieval);
    const Retriever trained(provider, trained_head, options.retrieval);

    ComparisonReport report;
    report.n_examples = dataset.size();
    report.has_truth = !truth.empty();
    for (SystemKind kind : options.systems) {
        SystemReport sys;
        sys.kind = kind;
        double total_ll = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const QAExample& ex = dataset[i];
            if (ex.subcorpus_ids.empty()) throw PreconditionError("example " + std::to_string(i) + " has no sub-corpus");
            const auto subcorpus = resolve_subcorpus(corpus, ex);

            Combination winner;
            switch (kind) {
                case SystemKind::NoRetrieval: winner = Combination{{}, 0.0, Stage::Single}; break;
                case SystemKind::FixedTop2: winner = base.fixed_topk(ex.question, subcorpus, 2); break;
                case SystemKind::AdaPcr: winner = base.retrieve(ex.question, subcorpus).winner; break;
                case SystemKind::AdaPcrRerank: winner = trained.retrieve(ex.question, subcorpus).winner; break;
            }
            const LmScore ll = score_combination(winner, corpus, ex, i, scorer, cache);
            total_ll += ll.log_likelihood;

            std::vector<std::string> context;
            for (const auto& id : winner.passage_ids) context.push_back(corpus.at(id).text);
            if (auto it = truth.find(i); it != truth.end()) {
                const bool hit = std::all_of(it->second.begin(), it->second.end(), [&](const std::string& id) {
                    return std::find(winner.passage_ids.begin(), winner.passage_ids.end(), id) != winner.passage_ids.end();
                });
                sys.gold_hits += hit ? 1 : 0;
            }
            sys.predictions.push_back(PredictionRecord{i, mock_read_answer(context, ex.answers), std::move(winner), ex.answers});
        }
        sys.metrics = evaluate_system(sys.predictions, display_name(kind));
        sys.mean_winner_log_likelihood = total_ll / static_cast<double>(dataset.size());
        report.systems.push_back(std::move(sys));
    }
    return report;
}

void write_report_json(std::ostream& out, const ComparisonReport& report) {
    json systems = json::array();
    for (const auto& s : report.systems) {
        json row{{"system", to_string(s.kind)},
                 {"label", display_name(s.kind)},
                 {"em", s.metrics.em},
                 {"f1", s.metrics.f1},
                 {"n_examples", s.metrics.n_examples},
                 {"mean_winner_log_likelihood", s.mean_winner_log_likelihood}};
        if (report.has_truth) row["gold_hits"] = s.gold_hits;
        systems.push_back(std::move(row));
    }
    out << json{{"n_examples", report.n_examples}, {"systems", systems}}.dump(2) << '\n';
}

void write_report_markdown(std::ostream& out, const ComparisonReport& report) {
    out << "| Model | EM | F1 | Mean log P(y) |";
    if (report.has_truth) out << " Gold hits |";
    out << "\n|---|---:|---:|---:|";
    if (report.has_truth) out << "---:|";
    out << '\n';
    char buf[160];
    for (const auto& s : report.systems) {
        std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.4f |", display_name(s.kind), 100.0 * s.metrics.em,
                      100.0 * s.metrics.f1, s.mean_winner_log_likelihood);
        out << buf;
        if (report.has_truth) out << ' ' << s.gold_hits << '/' << report.n_examples << " |";
        out << '\n';
    }
}

}  // namespace adapcr
