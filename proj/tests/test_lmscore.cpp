#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "adapcr/error.hpp"
#include "adapcr/lmscore.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace adapcr;
using nlohmann::json;

namespace {

// Per-token recomputation from the scorer's definition.
double oracle_log_likelihood(const ScoreRequest& r, double eps = 0.05) {
    std::set<std::string> seen;
    for (const auto& p : r.context_passages)
        for (const auto& t : tokenize(p)) seen.insert(t);
    for (const auto& t : tokenize(r.question)) seen.insert(t);
    double ll = 0.0;
    for (const auto& t : tokenize(r.answer)) ll += std::log(seen.count(t) ? 1.0 - eps : eps);
    return ll;
}

class Failing final : public AnswerScorer {
public:
    explicit Failing(int fail_at) : fail_at_(fail_at) {}
    LmScore score(const ScoreRequest& r) const override {
        if (++calls_ == fail_at_) throw TransportError("scorer down", 3);
        return mock_lm_score(r);
    }

private:
    int fail_at_;
    mutable int calls_ = 0;
};

Corpus pool_corpus() {
    Corpus c;
    for (int i = 0; i < 10; ++i) c.add("p" + std::to_string(i), "passage " + std::to_string(i) + " word" + std::to_string(i));
    return c;
}

CandidateSet pool_of_30() {
    CandidateSet set;
    set.question = "what word?";
    for (int i = 0; i < 5; ++i) set.singles.push_back(Combination::single("p" + std::to_string(i), 0.1 * i));
    for (int i = 0; i < 5; ++i)
        for (int j = 5; j < 10; ++j)
            set.pairs.push_back(Combination::pair("p" + std::to_string(i), "p" + std::to_string(j), 0.01 * j));
    return set;
}

}  // namespace

TEST_CASE("mock scorer formula") {
    const ScoreRequest all{{"the red fox jumps"}, "what?", "red fox"};
    CHECK(mock_lm_score(all).log_likelihood == doctest::Approx(2.0 * std::log(0.95)).epsilon(1e-14));
    CHECK(mock_lm_score(all).token_count == 2);

    const ScoreRequest none{{"the red fox"}, "what?", "blue whale shark"};
    CHECK(mock_lm_score(none).log_likelihood == doctest::Approx(3.0 * std::log(0.05)).epsilon(1e-14));

    const ScoreRequest in_question{{}, "is it paris?", "Paris"};
    CHECK(mock_lm_score(in_question).log_likelihood == doctest::Approx(std::log(0.95)).epsilon(1e-14));

    CHECK_THROWS_AS(mock_lm_score(ScoreRequest{{"x"}, "q", "?!"}), ContractError);
    CHECK_THROWS_AS(MockScorer(0.0), ConfigError);
    CHECK_THROWS_AS(MockScorer(0.5), ConfigError);
}

TEST_CASE("mock scorer factorizes over tokens and is monotone in coverage") {
    std::mt19937_64 g(5);
    const MockScorer scorer;
    auto words = [&](int n) {
        std::string s;
        for (int i = 0; i < n; ++i) s += "w" + std::to_string(g() % 12) + " ";
        return s;
    };
    for (int trial = 0; trial < 300; ++trial) {
        ScoreRequest r{{words(4)}, words(3), words(1 + static_cast<int>(g() % 4))};
        const auto per_token = scorer.token_log_probs(r);
        double sum = 0.0;
        for (double lp : per_token) sum += lp;
        CHECK(scorer.score(r).log_likelihood == doctest::Approx(sum).epsilon(1e-14));
        CHECK(scorer.score(r).log_likelihood == doctest::Approx(oracle_log_likelihood(r)).epsilon(1e-14));
        CHECK(scorer.score(r).log_likelihood <= 0.0);

        ScoreRequest more = r;
        more.context_passages.push_back(words(3));
        CHECK(scorer.score(more).log_likelihood >= scorer.score(r).log_likelihood);
    }
}

TEST_CASE("remote scorer protocol") {
    json reply = {{"log_likelihood", -1.2}, {"token_count", 3}};
    json last_request;
    testing::LocalServer server([&](httplib::Server& s) {
        s.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
            last_request = json::parse(req.body);
            res.set_content(reply.dump(), "application/json");
        });
    });
    const ScoreRequest request{{"ctx one", "ctx two"}, "q?", "ans"};
    CHECK(remote_lm_score(server.url(), request) == LmScore{-1.2, 3});
    CHECK(last_request["context"] == json::array({"ctx one", "ctx two"}));
    CHECK(last_request["question"] == "q?");
    CHECK(last_request["answer"] == "ans");

    reply = {{"log_likelihood", 0.5}};
    CHECK_THROWS_AS(remote_lm_score(server.url(), request), ContractError);
    reply = {{"log_likelihood", 0.5}, {"token_count", 1}};
    CHECK_THROWS_AS(remote_lm_score(server.url(), request), ContractError);
    reply = {{"token_count", 1}};
    CHECK_THROWS_AS(remote_lm_score(server.url(), request), ContractError);
    reply = {{"log_likelihood", -0.1}, {"token_count", 0}};
    CHECK_THROWS_AS(remote_lm_score(server.url(), request), ContractError);

    CHECK(dynamic_cast<MockScorer*>(make_scorer("mock").get()) != nullptr);
    CHECK(dynamic_cast<RemoteScorer*>(make_scorer("remote:" + server.url()).get()) != nullptr);
    CHECK_THROWS_AS(make_scorer("gpt"), ConfigError);
}

TEST_CASE("remote scorer gives up after three attempts") {
    try {
        RemoteScorer(testing::dead_endpoint(), 3, 1).score(ScoreRequest{{}, "q", "a"});
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.retryable());
        CHECK(e.attempts() == 3);
    }

    std::atomic<int> hits{0};
    testing::LocalServer always_500([&](httplib::Server& s) {
        s.Post("/score", [&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.status = 500;
        });
    });
    CHECK_THROWS_AS(RemoteScorer(always_500.url(), 3, 1).score(ScoreRequest{{}, "q", "a"}), TransportError);
    CHECK(hits == 3);
}

TEST_CASE("score_pool cache contract") {
    const Corpus corpus = pool_corpus();
    const QAExample ex{"what word?", {"word3"}, {}};
    const CandidateSet pool = pool_of_30();
    const MockScorer mock;
    ScoreCache cache;

    const CountingScorer cold(mock);
    const auto first = score_pool(pool, ex, 0, corpus, cold, cache);
    CHECK(first.size() == 30);
    CHECK(cold.calls() == 30);
    CHECK(cache.size() == 30);

    const CountingScorer warm(mock);
    const auto second = score_pool(pool, ex, 0, corpus, warm, cache);
    CHECK(warm.calls() == 0);
    CHECK(second == first);

    for (const auto& [c, s] : first) {
        const bool covered = std::find(c.passage_ids.begin(), c.passage_ids.end(), "p3") != c.passage_ids.end();
        CHECK(s.log_likelihood == doctest::Approx(std::log(covered ? 0.95 : 0.05)).epsilon(1e-14));
    }

    // Another question index is a different key.
    const CountingScorer other(mock);
    score_pool(pool, ex, 1, corpus, other, cache);
    CHECK(other.calls() == 30);
}

TEST_CASE("score_pool fails atomically") {
    const Corpus corpus = pool_corpus();
    const QAExample ex{"what word?", {"word3"}, {}};
    ScoreCache cache;
    const Failing failing(17);
    CHECK_THROWS_AS(score_pool(pool_of_30(), ex, 0, corpus, failing, cache), TransportError);
    CHECK(cache.size() == 0);
    CHECK_THROWS_AS(score_pool(pool_of_30(), QAExample{"q", {}, {}}, 0, corpus, MockScorer(), cache), ContractError);
}

TEST_CASE("score cache round trip") {
    ScoreCache cache;
    cache.insert(ScoreKey{{"a"}, 0, "x"}, LmScore{-0.123456789012345, 2});
    cache.insert(ScoreKey{{"a", "b"}, 3, "y z"}, LmScore{-5.5, 1});
    cache.insert(ScoreKey{{"c"}, 1, "quote \"q\""}, LmScore{-1e-17, 4});
    std::stringstream ss;
    cache.write(ss);
    ScoreCache back;
    back.read(ss);
    CHECK(back.snapshot() == cache.snapshot());

    testing::TempDir dir("cache");
    ScoreCache file_backed(dir / "cache.jsonl");
    file_backed.load();
    CHECK(file_backed.size() == 0);
    file_backed.insert(ScoreKey{{"a"}, 0, "x"}, LmScore{-1.0, 1});
    file_backed.save();
    ScoreCache reloaded(dir / "cache.jsonl");
    reloaded.load();
    CHECK(reloaded.lookup(ScoreKey{{"a"}, 0, "x"}) == LmScore{-1.0, 1});
    CHECK_FALSE(reloaded.lookup(ScoreKey{{"a"}, 1, "x"}).has_value());

    std::istringstream bad("{\"passage_ids\":[\"a\"]}\n");
    CHECK_THROWS_AS(ScoreCache().read(bad), ParseError);
}
