#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"
#include "adapcr/error.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace adapcr;
using nlohmann::json;

namespace {

EmbeddingVector vec(std::initializer_list<double> xs) {
    EmbeddingVector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return a.dot(b) / (a.norm() * b.norm()); }

std::string random_utf8(std::mt19937_64& g) {
    std::string s;
    const auto len = g() % 48;
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>(g() & 0xFF));
    return s;
}

}  // namespace

TEST_CASE("hash embedding golden vectors") {
    // Captured once at dim 8, seed 0.
    const EmbeddingVector abc = deterministic_hash_embed("abc", 8);
    CHECK(abc == vec({0, 0, 0, 0, 0, 0, 0, 1}));
    const double s = 0.57735026918962584;
    CHECK(deterministic_hash_embed("alpha beta gamma", 8) == vec({-s, 0, -s, 0, 0, 0, 0, -s}));
    CHECK(HashEmbedder(8).embed("abc", Side::Query) == abc);
    CHECK(HashEmbedder(8).embed("abc", Side::Passage) == abc);
}

TEST_CASE("hash embedding properties") {
    CHECK(deterministic_hash_embed("", 16).isZero());
    CHECK(deterministic_hash_embed("?!,", 16).isZero());
    CHECK(deterministic_hash_embed("one two three four", 64) == deterministic_hash_embed("Four three, TWO one", 64));
    CHECK(deterministic_hash_embed("x", 64, 1) != deterministic_hash_embed("x", 64, 2));
    CHECK_THROWS_AS(deterministic_hash_embed("x", 1), ConfigError);
    CHECK_THROWS_AS(HashEmbedder(0), ConfigError);
}

TEST_CASE("disjoint token texts are nearly orthogonal at dim 256") {
    std::mt19937_64 g(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::string a, b;
        for (int i = 0; i < 4; ++i) {
            a += "a" + std::to_string(g() % 100000) + " ";
            b += "b" + std::to_string(g() % 100000) + " ";
        }
        CHECK(std::abs(deterministic_hash_embed(a, 256).dot(deterministic_hash_embed(b, 256))) < 0.3);
    }
}

TEST_CASE("fuzzed inputs give finite, unit or zero vectors") {
    std::mt19937_64 g(99);
    const HashEmbedder embedder(32);
    const ProjectionHead head = ProjectionHead::identity(32);
    for (int i = 0; i < 10000; ++i) {
        const std::string text = random_utf8(g);
        const EmbeddingVector q = embed_query(embedder, head, text);
        REQUIRE(q.allFinite());
        if (tokenize(text).empty()) {
            CHECK(q.isZero());
        } else {
            CHECK(std::abs(q.norm() - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("projection heads") {
    const HashEmbedder embedder(16);
    const std::string text = "the quick brown fox";
    const EmbeddingVector base = embedder.embed(text, Side::Query);

    const ProjectionHead id = ProjectionHead::identity(16);
    CHECK(embed_query(embedder, id, text) == base);
    CHECK(embed_passage(embedder, id, text) == base);

    ProjectionHead zero{Matrix::Zero(16, 16), Matrix::Zero(16, 16)};
    CHECK(embed_query(embedder, zero, text).isZero());
    CHECK(embed_passage(embedder, id, "").isZero());

    std::mt19937_64 g(1);
    ProjectionHead distinct = id;
    for (Eigen::Index i = 0; i < 16; ++i)
        for (Eigen::Index j = 0; j < 16; ++j) distinct.query(i, j) += 0.1 * (static_cast<double>(g() % 1000) / 1000.0 - 0.5);
    const EmbeddingVector q = embed_query(embedder, distinct, text);
    const EmbeddingVector d = embed_passage(embedder, distinct, text);
    CHECK((q - d).norm() > 1e-3);
    CHECK((q - distinct.query * base).norm() < 1e-12);

    const ProjectionHead small = ProjectionHead::identity(8);
    CHECK_THROWS_AS(embed_query(embedder, small, text), ContractError);
}

TEST_CASE("head checkpoint round trip") {
    std::mt19937_64 g(4);
    ProjectionHead head = ProjectionHead::identity(5);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j) {
            head.query(i, j) = static_cast<double>(static_cast<std::int64_t>(g())) / 3e18;
            head.passage(i, j) = static_cast<double>(static_cast<std::int64_t>(g())) / 7e18;
        }
    std::stringstream ss;
    write_head(ss, head);
    CHECK(read_head(ss) == head);

    testing::TempDir dir("head");
    save_head(dir / "h.jsonl", head);
    CHECK(load_head(dir / "h.jsonl") == head);
    CHECK_THROWS_AS(load_head(dir / "missing.jsonl"), LookupError);

    std::istringstream only_query("{\"dim\":1,\"side\":\"query\",\"values\":[1.0]}\n");
    CHECK_THROWS_AS(read_head(only_query), ContractError);
    std::istringstream wrong_size(
        "{\"dim\":2,\"side\":\"query\",\"values\":[1.0]}\n{\"dim\":2,\"side\":\"passage\",\"values\":[1,0,0,1]}\n");
    CHECK_THROWS_AS(read_head(wrong_size), ContractError);
    ProjectionHead bad = ProjectionHead::identity(2);
    bad.query(0, 0) = std::nan("");
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("concat_query") {
    CHECK(concat_query("A", "B") == "A [SEP] B");
    CHECK(concat_query("", "B") == "[SEP] B");
    CHECK(concat_query("A", "B") != concat_query("B", "A"));
    CHECK(tokenize(concat_query("Alpha beta", "gamma?")) == std::vector<std::string>{"alpha", "beta", "sep", "gamma"});
}

TEST_CASE("provider spec parsing") {
    CHECK(EmbeddingProviderSpec::parse("hash", 64).kind == EmbeddingProviderSpec::Kind::DeterministicHash);
    const auto remote = EmbeddingProviderSpec::parse("remote:http://h:1", 64);
    CHECK(remote.kind == EmbeddingProviderSpec::Kind::Remote);
    CHECK(remote.endpoint == "http://h:1");
    CHECK_THROWS_AS(EmbeddingProviderSpec::parse("remote:", 64), ConfigError);
    CHECK_THROWS_AS(EmbeddingProviderSpec::parse("bert", 64), ConfigError);
    CHECK(make_provider(EmbeddingProviderSpec::parse("hash", 12))->dim() == 12);
}

TEST_CASE("caching provider memoizes per side") {
    struct Counting final : EmbeddingProvider {
        mutable int calls = 0;
        std::size_t dim() const override { return 4; }
        EmbeddingVector embed(std::string_view text, Side) const override {
            ++calls;
            return deterministic_hash_embed(text, 4);
        }
    } inner;
    const CachingProvider cache(inner);
    const auto a = cache.embed("x y", Side::Query);
    CHECK(cache.embed("x y", Side::Query) == a);
    CHECK(inner.calls == 1);
    cache.embed("x y", Side::Passage);
    CHECK(inner.calls == 2);
}

TEST_CASE("remote embedder protocol") {
    std::atomic<int> hits{0};
    json last_request;
    testing::LocalServer server([&](httplib::Server& s) {
        s.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_request = json::parse(req.body);
            json vectors = json::array();
            for (const auto& t : last_request["texts"]) {
                const auto v = deterministic_hash_embed(t.get<std::string>(), 4);
                vectors.push_back(std::vector<double>(v.data(), v.data() + v.size()));
            }
            res.set_content(json{{"vectors", vectors}, {"dim", 4}}.dump(), "application/json");
        });
    });
    const RemoteEmbedder remote(server.url(), 4);
    const auto v = remote.embed("hello world", Side::Passage);
    CHECK(v == deterministic_hash_embed("hello world", 4));
    CHECK(last_request["side"] == "passage");
    const auto batch = remote.embed_batch({"a", "b", "c"}, Side::Query);
    CHECK(batch.size() == 3);
    CHECK(hits == 2);

    const RemoteEmbedder mismatched(server.url(), 8);
    CHECK_THROWS_AS(mismatched.embed("a", Side::Query), ContractError);
}

TEST_CASE("remote embedder retries and transport failures") {
    std::atomic<int> hits{0};
    testing::LocalServer flaky([&](httplib::Server& s) {
        s.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
            if (++hits < 3) {
                res.status = 503;
                return;
            }
            res.set_content(R"({"vectors":[[1,0]],"dim":2})", "application/json");
        });
    });
    CHECK(RemoteEmbedder(flaky.url(), 2, 3, 1).embed("a", Side::Query) == vec({1, 0}));
    CHECK(hits == 3);

    testing::LocalServer garbage([&](httplib::Server& s) {
        s.Post("/embed", [](const httplib::Request&, httplib::Response& res) { res.set_content("nope", "text/plain"); });
    });
    CHECK_THROWS_AS(RemoteEmbedder(garbage.url(), 2, 3, 1).embed("a", Side::Query), ContractError);

    try {
        RemoteEmbedder(testing::dead_endpoint(), 2, 3, 1).embed("a", Side::Query);
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.retryable());
        CHECK(e.attempts() == 3);
    }
}

TEST_CASE("cosine of hash embeddings for identical text is one") {
    const auto a = deterministic_hash_embed("same words here", 64);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
}
