#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"
#include "adapcr/error.hpp"
#include "adapcr/retrieval.hpp"
#include "doctest.h"

using namespace adapcr;

namespace {

EmbeddingVector vec(std::initializer_list<double> xs) {
    EmbeddingVector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

// Text -> vector table; unknown text maps to zero.
class TableProvider final : public EmbeddingProvider {
public:
    explicit TableProvider(std::size_t dim) : dim_(dim) {}
    void set(const std::string& text, EmbeddingVector v) { table_[text] = std::move(v); }
    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text, Side) const override {
        auto it = table_.find(std::string(text));
        return it == table_.end() ? EmbeddingVector::Zero(static_cast<Eigen::Index>(dim_)) : it->second;
    }

private:
    std::size_t dim_;
    std::map<std::string, EmbeddingVector> table_;
};

std::vector<Passage> random_subcorpus(std::mt19937_64& g, std::size_t n, std::size_t vocab) {
    std::vector<Passage> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        const auto words = 2 + g() % 6;
        for (std::size_t w = 0; w < words; ++w) text += "t" + std::to_string(g() % vocab) + " ";
        out.push_back(Passage{"p" + std::to_string(100 + g() % 900) + "_" + std::to_string(i), text, words});
    }
    return out;
}

double plain_cos(const EmbeddingVector& a, const EmbeddingVector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct OracleResult {
    std::vector<std::string> ids;
    double score;
    std::size_t pool;
};

// Nested-loop enumeration of every single and pair, then argmax preferring
// singles and earlier candidates on ties.
OracleResult brute_force(const std::string& question, const std::vector<Passage>& sub, std::size_t k, bool dedupe) {
    auto embed = [](const std::string& t) { return deterministic_hash_embed(t, 64); };
    auto ranked = [&](const EmbeddingVector& q) {
        std::vector<std::pair<double, std::size_t>> r;
        for (std::size_t i = 0; i < sub.size(); ++i) r.emplace_back(plain_cos(q, embed(sub[i].text)), i);
        std::sort(r.begin(), r.end(), [&](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : sub[a.second].id < sub[b.second].id;
        });
        return r;
    };
    std::vector<OracleResult> pool;
    const auto singles = ranked(embed(question));
    for (std::size_t i = 0; i < std::min(k, singles.size()); ++i)
        pool.push_back({{sub[singles[i].second].id}, singles[i].first, 0});
    const std::size_t n_singles = pool.size();
    for (std::size_t i = 0; i < n_singles; ++i) {
        const Passage& first = sub[singles[i].second];
        std::size_t taken = 0;
        for (const auto& [s, j] : ranked(embed(first.text + " [SEP] " + question))) {
            if (taken == k) break;
            if (dedupe && sub[j].id == first.id) continue;
            pool.push_back({{first.id, sub[j].id}, s, 0});
            ++taken;
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
        if (pool[i].score > pool[best].score) best = i;
    OracleResult out = pool[best];
    out.pool = pool.size();
    return out;
}

}  // namespace

TEST_CASE("score_single examples") {
    CHECK(score_single(vec({1, 2, 3}), vec({1, 2, 3})) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(score_single(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(score_single(vec({1, 0}), vec({1, 1})) == doctest::Approx(0.70710678118654752).epsilon(1e-12));
    CHECK(score_single(vec({0, 0}), vec({1, 1})) == 0.0);
    CHECK(is_degenerate(vec({0, 0}), vec({1, 1})));
    CHECK_FALSE(is_degenerate(vec({1, 0}), vec({1, 1})));
    CHECK(score_single(vec({1, 0}), vec({-2, 0})) == -1.0);
    CHECK_THROWS_AS(score_single(vec({1, 0}), vec({1, 0, 0})), ContractError);
}

TEST_CASE("combination invariants") {
    CHECK_NOTHROW(Combination::single("a", 0.1).validate());
    CHECK_THROWS_AS(Combination::pair("a", "a", 0.1).validate(), ContractError);
    CHECK_NOTHROW(Combination::pair("a", "a", 0.1).validate(true));
    CHECK_THROWS_AS((Combination{{"a"}, 0.0, Stage::Pair}).validate(), ContractError);
    CHECK_THROWS_AS((Combination{{}, 0.0, Stage::Single}).validate(), ContractError);
    CHECK_THROWS_AS((RetrievalConfig{0, 100, true}).validate(), ConfigError);
    CHECK_THROWS_AS((RetrievalConfig{6, 5, true}).validate(), ConfigError);
}

TEST_CASE("stage sizes") {
    std::mt19937_64 g(2);
    const auto sub = random_subcorpus(g, 100, 400);
    const HashEmbedder embedder(64);

    const Retriever no_dedupe(embedder, RetrievalConfig{5, 100, false});
    const auto r = no_dedupe.retrieve("t1 t2 t3", sub);
    CHECK(r.candidates.singles.size() == 5);
    CHECK(r.candidates.pairs.size() == 25);
    CHECK(r.candidates.size() == 30);

    const Retriever dedupe(embedder, RetrievalConfig{5, 100, true});
    const auto d = dedupe.retrieve("t1 t2 t3", sub);
    CHECK(d.candidates.size() == 30);
    for (const auto& p : d.candidates.pairs) CHECK(p.passage_ids[0] != p.passage_ids[1]);

    const Retriever k1(embedder, RetrievalConfig{1, 100, true});
    const auto one = k1.retrieve("t1 t2 t3", sub);
    CHECK(one.candidates.singles.size() == 1);
    CHECK(one.candidates.pairs.size() <= 1);
    CHECK(one.candidates.size() <= 2);

    const std::vector<Passage> single_passage{sub.front()};
    const auto lonely = dedupe.retrieve("t1", single_passage);
    CHECK(lonely.candidates.singles.size() == 1);
    CHECK(lonely.candidates.pairs.empty());

    // k larger than the sub-corpus: everything, still sorted.
    const std::vector<Passage> few(sub.begin(), sub.begin() + 3);
    const auto all3 = dedupe.first_stage("t1 t2", few);
    CHECK(all3.size() == 3);
    CHECK(std::is_sorted(all3.begin(), all3.end(), [](const auto& a, const auto& b) { return a.score > b.score; }));

    CHECK_THROWS_AS(dedupe.first_stage("x", std::span<const Passage>{}), PreconditionError);
}

TEST_CASE("self-retrieval puts the identical passage first") {
    std::mt19937_64 g(8);
    auto sub = random_subcorpus(g, 40, 200);
    sub.push_back(Passage{"target", "zebra quartz lumen", 3});
    const HashEmbedder embedder(128);
    const Retriever retriever(embedder, RetrievalConfig{});
    const auto d1 = retriever.first_stage("zebra quartz lumen", sub);
    CHECK(d1.front().passage_ids.front() == "target");
    CHECK(d1.front().score == doctest::Approx(1.0).epsilon(1e-12));
    const auto r = retriever.retrieve("zebra quartz lumen", sub);
    CHECK(r.winner == Combination::single("target", d1.front().score));
}

TEST_CASE("every passage its own nearest neighbour, dedupe on") {
    // Passages with disjoint tokens: each concat query is nearest to its own passage.
    std::vector<Passage> sub;
    for (int i = 0; i < 12; ++i) {
        const std::string t = "u" + std::to_string(i) + " v" + std::to_string(i) + " w" + std::to_string(i);
        sub.push_back(Passage{"d" + std::to_string(10 + i), t, 3});
    }
    const HashEmbedder embedder(256);
    for (std::size_t k : {1u, 3u, 5u}) {
        const Retriever retriever(embedder, RetrievalConfig{k, 100, true});
        const auto d1 = retriever.first_stage("u0 v1 w2", sub);
        const auto d2 = retriever.second_stage("u0 v1 w2", d1, sub);
        CHECK(d2.size() == d1.size() * k);
        for (const auto& p : d2) CHECK(p.passage_ids[0] != p.passage_ids[1]);
        const Retriever keep(embedder, RetrievalConfig{k, 100, false});
        const auto d2_keep = keep.second_stage("u0 v1 w2", d1, sub);
        for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d2_keep[i * k].passage_ids[1] == d1[i].passage_ids[0]);
    }
}

TEST_CASE("assemble_candidates and select_best") {
    auto s = [](const char* id, double v) { return Combination::single(id, v); };
    auto p = [](const char* a, const char* b, double v) { return Combination::pair(a, b, v); };

    const auto set = assemble_candidates("q", {s("a", 0.9), s("b", 0.5)}, {p("a", "b", 0.7), p("b", "a", 0.2)});
    CHECK(set.size() == 4);
    CHECK(set[0] == s("a", 0.9));
    CHECK(set[2] == p("a", "b", 0.7));
    CHECK(select_best(set) == s("a", 0.9));

    CHECK(select_best(assemble_candidates("q", {s("a", 0.3), s("b", 0.3)}, {p("a", "b", 0.3)})) == s("a", 0.3));
    CHECK(select_best(assemble_candidates("q", {s("a", 0.3)}, {p("a", "b", 0.8)})) == p("a", "b", 0.8));
    CHECK_THROWS_AS(select_best(CandidateSet{}), PreconditionError);
    CHECK_THROWS_AS(assemble_candidates("q", {p("a", "b", 0.1)}, {}), ContractError);
    CHECK_THROWS_AS(assemble_candidates("q", {s("a", 0.1)}, {s("b", 0.1)}), ContractError);
    CHECK_THROWS_AS(assemble_candidates("q", {s("a", 0.1)}, {p("a", "b", 0.1), p("a", "c", 0.1)}), ContractError);
}

TEST_CASE("planted pair beats every single") {
    TableProvider table(3);
    const std::vector<Passage> sub{{"A", "passage a", 2}, {"B", "passage b", 2}, {"C", "passage c", 2}};
    table.set("question", vec({1, 0, 0}));
    table.set("passage a", vec({0.6, 0.8, 0}));
    table.set("passage b", vec({0, 0.2, 1}));
    table.set("passage c", vec({0.5, 0, 0.866}));
    table.set("passage a [SEP] question", vec({0, 0.2, 1}));
    const Retriever retriever(table, RetrievalConfig{2, 100, true});
    const auto r = retriever.retrieve("question", sub);
    CHECK(r.winner.passage_ids == std::vector<std::string>{"A", "B"});
    CHECK(r.winner.score == doctest::Approx(1.0));
    for (const auto& single : r.candidates.singles) CHECK(r.winner.score > single.score);
}

TEST_CASE("identity head form matches an explicit identity head") {
    std::mt19937_64 g(12);
    const auto sub = random_subcorpus(g, 30, 60);
    const HashEmbedder embedder(64);
    const ProjectionHead id = ProjectionHead::identity(64);
    const Retriever explicit_head(embedder, id, RetrievalConfig{});
    const Retriever implicit_head(embedder, RetrievalConfig{});
    CHECK(explicit_head.retrieve("t1 t4", sub).candidates == implicit_head.retrieve("t1 t4", sub).candidates);
    CHECK(implicit_head.head() == nullptr);
    CHECK(explicit_head.head() == &id);
    const ProjectionHead wrong = ProjectionHead::identity(8);
    CHECK_THROWS_AS(Retriever(embedder, wrong, RetrievalConfig{}), ContractError);
}

TEST_CASE("retriever agrees with brute-force enumeration on small sub-corpora") {
    std::mt19937_64 g(21);
    const HashEmbedder embedder(64);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + g() % 20;
        const std::size_t k = 1 + g() % 5;
        const bool dedupe = (g() & 1) != 0;
        const auto sub = random_subcorpus(g, n, 30);
        std::string q;
        for (int w = 0; w < 3; ++w) q += "t" + std::to_string(g() % 30) + " ";
        const Retriever retriever(embedder, RetrievalConfig{k, 100, dedupe});
        const auto got = retriever.retrieve(q, sub);
        const auto want = brute_force(q, sub, k, dedupe);
        CHECK(got.winner.passage_ids == want.ids);
        CHECK(got.winner.score == doctest::Approx(want.score).epsilon(1e-12));
        CHECK(got.candidates.size() == want.pool);
        for (const auto& c : got.candidates.all()) {
            CHECK(c.score >= -1.0);
            CHECK(c.score <= 1.0);
        }
        if (got.winner.stage == Stage::Pair)
            for (const auto& s : got.candidates.singles) CHECK(got.winner.score > s.score);
    }
}

TEST_CASE("determinism and the corpus-level retrieve") {
    std::mt19937_64 g(30);
    Corpus corpus;
    for (const auto& p : random_subcorpus(g, 150, 80)) corpus.add(p.id, p.text);
    const Bm25Index index(corpus);
    const HashEmbedder embedder(64);
    const Retriever retriever(embedder, RetrievalConfig{});
    const QAExample ex{"t3 t7 t11", {"x"}, {}};
    const auto a = retrieve(retriever, corpus, index, ex);
    const auto b = retrieve(retriever, corpus, index, ex);
    CHECK(a.candidates == b.candidates);
    CHECK(a.winner == b.winner);

    QAExample cached = ex;
    cached.subcorpus_ids = preretrieve_subcorpus(index, ex.question, 100);
    CHECK(retrieve(retriever, corpus, index, cached).candidates == a.candidates);
}

TEST_CASE("fixed top-k arm") {
    std::vector<Passage> sub{{"a", "red blue", 2}, {"b", "red green", 2}, {"c", "yellow", 1}};
    const HashEmbedder embedder(64);
    const Retriever retriever(embedder, RetrievalConfig{});
    const auto d1 = retriever.first_stage("red blue green", sub);
    const auto top2 = retriever.fixed_topk("red blue green", sub);
    CHECK(top2.stage == Stage::Pair);
    CHECK(top2.passage_ids == std::vector<std::string>{d1[0].passage_ids[0], d1[1].passage_ids[0]});
    CHECK(top2.score == doctest::Approx(0.5 * (d1[0].score + d1[1].score)));
    CHECK(retriever.fixed_topk("red blue green", sub, 1) == d1[0]);
    CHECK_THROWS_AS(retriever.fixed_topk("red", sub, 3), ConfigError);
}
