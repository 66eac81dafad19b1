#include "adapcr/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "adapcr/error.hpp"
#include "adapcr/eval.hpp"
#include "adapcr/logging.hpp"
#include "adapcr/rng.hpp"

namespace adapcr {

const char* to_string(LossKind kind) noexcept {
    switch (kind) {
        case LossKind::Rag: return "rag";
        case LossKind::Kl: return "kl";
        case LossKind::Ce: return "ce";
    }
    return "unknown";
}

LossKind parse_loss(std::string_view name) {
    if (name == "rag") return LossKind::Rag;
    if (name == "kl") return LossKind::Kl;
    if (name == "ce") return LossKind::Ce;
    throw ConfigError("unknown loss: " + std::string(name) + " (expected rag, kl or ce)");
}

const char* to_string(NegativeSource source) noexcept {
    return source == NegativeSource::Passages ? "passages" : "combinations";
}

NegativeSource parse_negative_source(std::string_view name) {
    if (name == "passages") return NegativeSource::Passages;
    if (name == "combinations") return NegativeSource::Combinations;
    throw ConfigError("unknown negative source: " + std::string(name) + " (expected passages or combinations)");
}

void TrainingConfig::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (top_k_marginal == 0) throw ConfigError("top_k_marginal must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be non-negative");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

namespace {

constexpr double kMarginalFloor = 1e-300;

double log_sum_exp(std::span<const double> values) {
    const double peak = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(peak)) return peak;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - peak);
    return peak + std::log(sum);
}

std::vector<double> log_softmax(std::span<const double> values, double temperature) {
    std::vector<double> scaled(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) scaled[i] = values[i] / temperature;
    const double lse = log_sum_exp(scaled);
    for (double& v : scaled) v -= lse;
    return scaled;
}

}  // namespace

RetrieverDistribution normalize_pret(std::span<const double> scores, double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (scores.empty()) throw PreconditionError("normalize_pret over an empty pool");
    for (double s : scores) {
        if (!std::isfinite(s)) throw PreconditionError("normalize_pret needs finite scores");
    }
    RetrieverDistribution dist;
    dist.gamma = gamma;
    dist.log_probabilities = log_softmax(scores, gamma);
    dist.probabilities.reserve(scores.size());
    for (double lp : dist.log_probabilities) dist.probabilities.push_back(std::exp(lp));
    return dist;
}

std::vector<std::size_t> marginal_set(std::span<const double> probabilities, std::size_t top_k,
                                      std::span<const Stage> stages, bool balance_stages) {
    std::vector<std::size_t> order(probabilities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
    const std::size_t k = std::min(top_k, order.size());
    std::vector<std::size_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    if (!balance_stages || stages.size() != probabilities.size() || k < 2) return top;

    for (Stage wanted : {Stage::Single, Stage::Pair}) {
        const auto has = [&](Stage s) {
            return std::any_of(top.begin(), top.end(), [&](std::size_t i) { return stages[i] == s; });
        };
        if (has(wanted)) continue;
        // Best-ranked candidate of the missing stage replaces the lowest-ranked member.
        auto it = std::find_if(order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                               [&](std::size_t i) { return stages[i] == wanted; });
        if (it == order.end()) continue;
        top.back() = *it;
    }
    return top;
}

PoolLoss pool_loss(LossKind kind, std::span<const double> scores, std::span<const double> log_likelihoods,
                   const TrainingConfig& config, std::span<const Stage> stages) {
    if (scores.size() != log_likelihoods.size()) throw ContractError("scores and likelihoods are not aligned");
    const RetrieverDistribution dist = normalize_pret(scores, config.gamma);
    const auto& p = dist.probabilities;
    const auto& log_p = dist.log_probabilities;
    const std::size_t n = scores.size();

    PoolLoss out;
    out.d_scores.assign(n, 0.0);
    switch (kind) {
        case LossKind::Rag: {
            const auto top = marginal_set(p, config.top_k_marginal, stages, config.balance_stages);
            std::vector<double> joint;
            joint.reserve(top.size());
            for (std::size_t i : top) joint.push_back(log_p[i] + log_likelihoods[i]);
            const double log_marginal = log_sum_exp(joint);
            if (!(log_marginal >= std::log(kMarginalFloor))) {
                out.loss = -std::log(kMarginalFloor);
                out.clamped = true;
                return out;
            }
            out.loss = -log_marginal;
            for (std::size_t j = 0; j < n; ++j) out.d_scores[j] = p[j];
            for (std::size_t t = 0; t < top.size(); ++t) out.d_scores[top[t]] -= std::exp(joint[t] - log_marginal);
            break;
        }
        case LossKind::Kl: {
            const auto log_q = log_softmax(log_likelihoods, config.beta);
            for (std::size_t i = 0; i < n; ++i) {
                const double q = std::exp(log_q[i]);
                if (q > 0.0) out.loss += q * (log_q[i] - log_p[i]);
                out.d_scores[i] = p[i] - q;
            }
            break;
        }
        case LossKind::Ce: {
            std::size_t gold = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (log_likelihoods[i] > log_likelihoods[gold]) gold = i;
            }
            out.loss = -log_p[gold];
            for (std::size_t j = 0; j < n; ++j) out.d_scores[j] = p[j];
            out.d_scores[gold] -= 1.0;
            break;
        }
    }
    for (double& d : out.d_scores) d /= config.gamma;
    return out;
}

// ---------------------------------------------------------------------------

void TrainingExample::validate() const {
    if (pool.empty()) throw ContractError("training example has an empty pool");
    if (pool.size() != lm_scores.size()) throw ContractError("pool and lm_scores are not index-aligned");
}

namespace {

double examples_loss(LossKind kind, std::span<const TrainingExample> batch, const TrainingConfig& config) {
    config.validate();
    double total = 0.0;
    std::size_t clamped = 0;
    for (const TrainingExample& ex : batch) {
        ex.validate();
        std::vector<double> scores;
        std::vector<double> lls;
        std::vector<Stage> stages;
        for (std::size_t i = 0; i < ex.pool.size(); ++i) {
            scores.push_back(ex.pool[i].score);
            stages.push_back(ex.pool[i].stage);
            lls.push_back(ex.lm_scores[i].log_likelihood);
        }
        const PoolLoss pl = pool_loss(kind, scores, lls, config, stages);
        clamped += pl.clamped ? 1 : 0;
        total += pl.loss;
    }
    if (clamped > 0) log::warn("rag_marginal_clamped", {{"examples", clamped}});
    return total;
}

}  // namespace

double rag_loss(std::span<const TrainingExample> batch, const TrainingConfig& config) {
    return examples_loss(LossKind::Rag, batch, config);
}
double kl_loss(std::span<const TrainingExample> batch, const TrainingConfig& config) {
    return examples_loss(LossKind::Kl, batch, config);
}
double ce_loss(std::span<const TrainingExample> batch, const TrainingConfig& config) {
    return examples_loss(LossKind::Ce, batch, config);
}
double batch_loss(std::span<const TrainingExample> batch, const TrainingConfig& config) {
    return examples_loss(config.loss, batch, config);
}

// ---------------------------------------------------------------------------

CandidateFeatures featurize(const Combination& combination, std::string_view question, const Corpus& corpus,
                            const EmbeddingProvider& provider, double log_likelihood) {
    combination.validate(/*allow_self_pair=*/true);
    CandidateFeatures f;
    f.log_likelihood = log_likelihood;
    f.stage = combination.stage;
    if (combination.stage == Stage::Single) {
        f.query_base = provider.embed(question, Side::Query);
        f.passage_base = provider.embed(corpus.at(combination.passage_ids[0]).text, Side::Passage);
    } else {
        const std::string query = concat_query(corpus.at(combination.passage_ids[0]).text, question);
        f.query_base = provider.embed(query, Side::Query);
        f.passage_base = provider.embed(corpus.at(combination.passage_ids[1]).text, Side::Passage);
    }
    return f;
}

std::vector<double> candidate_scores(const ExampleFeatures& features, const ProjectionHead& head) {
    std::vector<double> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(score_single(head.query * f.query_base, head.passage * f.passage_base));
    return out;
}

namespace {

struct Unpacked {
    std::vector<double> lls;
    std::vector<Stage> stages;
};

Unpacked unpack(const ExampleFeatures& features) {
    Unpacked u;
    for (const auto& f : features) {
        u.lls.push_back(f.log_likelihood);
        u.stages.push_back(f.stage);
    }
    return u;
}

}  // namespace

double features_loss(std::span<const ExampleFeatures> batch, const ProjectionHead& head, const TrainingConfig& config) {
    double total = 0.0;
    for (const auto& features : batch) {
        const auto u = unpack(features);
        total += pool_loss(config.loss, candidate_scores(features, head), u.lls, config, u.stages).loss;
    }
    return total;
}

LossAndGradient grad_loss(std::span<const ExampleFeatures> batch, const ProjectionHead& head,
                          const TrainingConfig& config) {
    const auto dim = static_cast<Eigen::Index>(head.dim());
    LossAndGradient out;
    out.gradient.query = Matrix::Zero(dim, dim);
    out.gradient.passage = Matrix::Zero(dim, dim);
    for (const auto& features : batch) {
        if (features.empty()) continue;
        std::vector<EmbeddingVector> us;
        std::vector<EmbeddingVector> vs;
        std::vector<double> scores;
        for (const auto& f : features) {
            us.push_back(head.query * f.query_base);
            vs.push_back(head.passage * f.passage_base);
            scores.push_back(score_single(us.back(), vs.back()));
        }
        const auto u = unpack(features);
        const PoolLoss pl = pool_loss(config.loss, scores, u.lls, config, u.stages);
        out.loss += pl.loss;
        out.clamped += pl.clamped ? 1 : 0;
        // Chain rule through the cosine: s = u.v / (|u||v|), u = Wq a, v = Wd b.
        for (std::size_t j = 0; j < features.size(); ++j) {
            const double g = pl.d_scores[j];
            if (g == 0.0) continue;
            const double nu = us[j].norm();
            const double nv = vs[j].norm();
            if (nu == 0.0 || nv == 0.0) continue;
            const double s = scores[j];
            const EmbeddingVector ds_du = vs[j] / (nu * nv) - s * us[j] / (nu * nu);
            const EmbeddingVector ds_dv = us[j] / (nu * nv) - s * vs[j] / (nv * nv);
            out.gradient.query.noalias() += (g * ds_du) * features[j].query_base.transpose();
            out.gradient.passage.noalias() += (g * ds_dv) * features[j].passage_base.transpose();
        }
    }
    return out;
}

namespace {

std::vector<double> flatten(const Matrix& q, const Matrix& d) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(q.size() + d.size()));
    for (const Matrix* m : {&q, &d})
        for (Eigen::Index r = 0; r < m->rows(); ++r)
            for (Eigen::Index c = 0; c < m->cols(); ++c) out.push_back((*m)(r, c));
    return out;
}

}  // namespace

GradientReport gradcheck(std::span<const ExampleFeatures> batch, const ProjectionHead& head,
                         const TrainingConfig& config, const GradCheckOptions& options) {
    GradientReport report;
    report.loss = config.loss;
    const auto lg = grad_loss(batch, head, config);
    report.analytic = flatten(lg.gradient.query, lg.gradient.passage);
    if (options.corrupt && !report.analytic.empty()) report.analytic.front() += 1e-2;

    ProjectionHead probe = head;
    const auto dim = static_cast<Eigen::Index>(head.dim());
    for (Side side : {Side::Query, Side::Passage}) {
        Matrix& w = probe.side(side);
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                const double saved = w(r, c);
                w(r, c) = saved + options.step;
                const double up = features_loss(batch, probe, config);
                w(r, c) = saved - options.step;
                const double down = features_loss(batch, probe, config);
                w(r, c) = saved;
                report.numeric.push_back((up - down) / (2.0 * options.step));
            }
        }
    }
    for (std::size_t i = 0; i < report.analytic.size(); ++i) {
        const double a = report.analytic[i];
        const double n = report.numeric[i];
        const double abs_diff = std::abs(a - n);
        const double rel = abs_diff / std::max({std::abs(a), std::abs(n), options.rel_floor});
        report.max_abs_diff = std::max(report.max_abs_diff, abs_diff);
        if (rel > report.max_rel_diff) {
            report.max_rel_diff = rel;
            report.worst_index = i;
        }
    }
    return report;
}

RandomBatch random_batch(std::size_t dim, std::size_t pool, std::size_t batch_size, std::uint64_t seed) {
    auto engine = rng::make_engine(seed, "gradcheck/batch");
    const auto n = static_cast<Eigen::Index>(dim);
    const auto gaussian = [&](Eigen::Index size) {
        EmbeddingVector v(size);
        for (Eigen::Index i = 0; i < size; ++i) v[i] = rng::normal(engine);
        return v;
    };
    RandomBatch out;
    out.head = ProjectionHead::identity(dim);
    for (Side side : {Side::Query, Side::Passage}) {
        Matrix& w = out.head.side(side);
        for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index c = 0; c < n; ++c) w(r, c) += 0.1 * rng::normal(engine);
    }
    for (std::size_t b = 0; b < batch_size; ++b) {
        ExampleFeatures features;
        for (std::size_t j = 0; j < pool; ++j) {
            CandidateFeatures f;
            f.query_base = gaussian(n);
            f.passage_base = gaussian(n);
            f.log_likelihood = rng::uniform(engine, -6.0, -0.05);
            f.stage = (j % 2 == 0) ? Stage::Single : Stage::Pair;
            features.push_back(std::move(f));
        }
        out.batch.push_back(std::move(features));
    }
    return out;
}

// ---------------------------------------------------------------------------

bool answer_in_passages(const QAExample& example, const Corpus& corpus) {
    std::vector<std::vector<std::string>> needles;
    for (const auto& a : example.answers) {
        auto t = normalized_tokens(a);
        if (!t.empty()) needles.push_back(std::move(t));
    }
    if (needles.empty()) return false;
    for (const auto& id : example.subcorpus_ids) {
        const auto hay = normalized_tokens(corpus.at(id).text);
        for (const auto& needle : needles) {
            if (std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end()) return true;
        }
    }
    return false;
}

FilterResult positive_filter(const std::vector<QAExample>& dataset, const Corpus& corpus) {
    FilterResult result;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (answer_in_passages(dataset[i], corpus)) {
            result.retained.push_back(i);
        } else {
            ++result.dropped;
        }
    }
    return result;
}

std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     std::size_t epoch) {
    if (n == 0) throw PreconditionError("sample_batches over an empty dataset");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (batch_size > n) {
        log::warn("batch_size_exceeds_dataset", {{"batch_size", batch_size}, {"examples", n}});
        batch_size = n;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto engine = rng::make_engine(seed, "train/batches/" + std::to_string(epoch));
    rng::shuffle(order, engine);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<Combination> in_batch_negatives(std::span<const PreparedExample> prepared,
                                            std::span<const std::size_t> batch, std::size_t member,
                                            NegativeSource source) {
    const PreparedExample& self = prepared[batch[member]];
    std::vector<Combination> negatives;
    const auto known = [&](const Combination& c) {
        for (std::size_t i = 0; i < self.data.pool.size(); ++i) {
            if (self.data.pool[i].passage_ids == c.passage_ids) return true;
        }
        return std::any_of(negatives.begin(), negatives.end(),
                           [&](const Combination& n) { return n.passage_ids == c.passage_ids; });
    };
    for (std::size_t m = 0; m < batch.size(); ++m) {
        if (m == member) continue;
        const Combination& w = prepared[batch[m]].winner;
        if (source == NegativeSource::Combinations) {
            if (!known(w)) negatives.push_back(w);
            continue;
        }
        for (const auto& id : w.passage_ids) {
            Combination c = Combination::single(id, 0.0);
            if (!known(c)) negatives.push_back(std::move(c));
        }
    }
    return negatives;
}

void write_loss_curve(std::ostream& out, const std::vector<EpochStat>& curve) {
    out << "epoch,loss,retained_examples\n";
    char buf[64];
    for (const auto& e : curve) {
        std::snprintf(buf, sizeof buf, "%.17g", e.loss);
        out << e.epoch << ',' << buf << ',' << e.retained_examples << '\n';
    }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const Corpus& corpus, const EmbeddingProvider& provider, const AnswerScorer& scorer,
                 ScoreCache& cache, RetrievalConfig retrieval, TrainingConfig config)
    : corpus_(corpus), provider_(provider), scorer_(scorer), cache_(cache), retrieval_(retrieval), config_(config) {
    retrieval_.validate();
    config_.validate();
}

std::vector<PreparedExample> Trainer::prepare(const std::vector<QAExample>& dataset, const ProjectionHead& head,
                                              FilterResult* filter) const {
    std::vector<QAExample> examples = dataset;
    if (std::any_of(examples.begin(), examples.end(), [](const QAExample& e) { return e.subcorpus_ids.empty(); })) {
        const Bm25Index index(corpus_);
        for (auto& e : examples) {
            if (e.subcorpus_ids.empty()) e.subcorpus_ids = preretrieve_subcorpus(index, e.question, retrieval_.subcorpus_limit);
        }
    }
    const FilterResult kept = positive_filter(examples, corpus_);
    if (filter) *filter = kept;

    const Retriever retriever(provider_, head, retrieval_);
    std::vector<PreparedExample> prepared;
    prepared.reserve(kept.retained.size());
    for (std::size_t idx : kept.retained) {
        const QAExample& ex = examples[idx];
        const auto subcorpus = resolve_subcorpus(corpus_, ex);
        RetrievalResult rr = retriever.retrieve(ex.question, subcorpus);
        const auto scored = score_pool(rr.candidates, ex, idx, corpus_, scorer_, cache_);
        PreparedExample p;
        p.question_idx = idx;
        p.winner = rr.winner;
        for (const auto& [combination, lm] : scored) {
            p.data.lm_scores.push_back(lm);
            p.features.push_back(featurize(combination, ex.question, corpus_, provider_, lm.log_likelihood));
        }
        p.data.example = ex;
        p.data.pool = std::move(rr.candidates);
        prepared.push_back(std::move(p));
    }
    return prepared;
}

namespace {

bool all_finite(const std::vector<double>& xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

[[noreturn]] void abort_non_finite(std::size_t epoch, const nlohmann::json& dump) {
    log::error("non_finite_loss", {{"epoch", epoch}, {"batch", dump}});
    throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ": " + dump.dump());
}

}  // namespace

double Trainer::evaluate(std::span<const PreparedExample> prepared, const ProjectionHead& head) const {
    if (prepared.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : prepared) {
        const auto scores = candidate_scores(p.features, head);
        if (!all_finite(scores)) {
            throw NumericError("non-finite scores for question " + std::to_string(p.question_idx));
        }
        const ExampleFeatures* f = &p.features;
        total += features_loss(std::span(f, 1), head, config_);
    }
    return total / static_cast<double>(prepared.size());
}

ExampleFeatures Trainer::batch_features(std::span<const PreparedExample> prepared, std::span<const std::size_t> batch,
                                        std::size_t member) const {
    const PreparedExample& self = prepared[batch[member]];
    ExampleFeatures features = self.features;
    if (!config_.in_batch_negatives) return features;
    for (const Combination& neg : in_batch_negatives(prepared, batch, member, config_.negative_source)) {
        const LmScore lm =
            score_combination(neg, corpus_, self.data.example, self.question_idx, scorer_, cache_);
        features.push_back(featurize(neg, self.data.example.question, corpus_, provider_, lm.log_likelihood));
    }
    return features;
}

TrainResult Trainer::train(const std::vector<QAExample>& dataset, ProjectionHead head) const {
    FilterResult filter;
    const auto prepared = prepare(dataset, head, &filter);
    log::info("positive_filter", {{"retained", filter.retained.size()}, {"dropped", filter.dropped}});
    TrainResult result = train_prepared(prepared, std::move(head));
    result.dropped = filter.dropped;
    return result;
}

TrainResult Trainer::train_prepared(std::span<const PreparedExample> prepared, ProjectionHead head) const {
    if (prepared.empty()) throw PreconditionError("no training examples survived positive filtering");
    if (head.dim() != provider_.dim()) throw ContractError("head and provider dimensions differ");
    TrainResult result;
    result.retained = prepared.size();

    const auto record = [&](std::size_t epoch) {
        EpochStat stat{epoch, evaluate(prepared, head), prepared.size()};
        result.curve.push_back(stat);
        if (on_epoch) on_epoch(stat);
    };
    record(0);

    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
        for (const auto& batch : sample_batches(prepared.size(), config_.batch_size, config_.seed, epoch)) {
            std::vector<ExampleFeatures> features;
            features.reserve(batch.size());
            for (std::size_t m = 0; m < batch.size(); ++m) features.push_back(batch_features(prepared, batch, m));
            const auto dump_batch = [&] {
                nlohmann::json dump = nlohmann::json::array();
                for (std::size_t m = 0; m < batch.size(); ++m) {
                    dump.push_back({{"question_idx", prepared[batch[m]].question_idx},
                                    {"scores", candidate_scores(features[m], head)}});
                }
                return dump;
            };
            for (const auto& f : features) {
                if (!all_finite(candidate_scores(f, head))) abort_non_finite(epoch, dump_batch());
            }
            const LossAndGradient lg = grad_loss(features, head, config_);
            result.clamped += lg.clamped;
            if (!std::isfinite(lg.loss) || !lg.gradient.query.allFinite() || !lg.gradient.passage.allFinite()) {
                abort_non_finite(epoch, dump_batch());
            }
            // Step on the batch-mean gradient so the step size does not scale with batch size.
            const double step = config_.learning_rate / static_cast<double>(batch.size());
            head.query -= step * lg.gradient.query;
            head.passage -= step * lg.gradient.passage;
        }
        record(epoch);
    }
    result.head = std::move(head);
    return result;
}

}  // namespace adapcr
