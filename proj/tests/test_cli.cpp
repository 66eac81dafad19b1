#include <sstream>

#include "adapcr/cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace adapcr;

namespace {

struct Run {
    int code;
    std::string out;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), {"adapcr", "--log-level", "off"});
    std::ostringstream out;
    const int code = run_cli(args, out);
    return {code, out.str()};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("cli exit codes") {
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"retrieve", "--help"}).code == kExitOk);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"retrieve", "--bogus"}).code == kExitUsage);
    CHECK(cli({"retrieve", "--questions", "q.jsonl"}).code == kExitConfig);
    CHECK(cli({"gradcheck", "--dim", "abc"}).code == kExitConfig);
    CHECK(cli({"train", "--corpus", "/nonexistent/c.jsonl", "--dataset", "/nonexistent/d.jsonl", "--out-head", "/tmp/x"})
              .code == kExitRuntime);
    CHECK(cli({"train", "--corpus", "c", "--dataset", "d", "--loss", "mse"}).code == kExitConfig);
}

TEST_CASE("cli gradcheck") {
    const auto ok = cli({"gradcheck", "--seed", "3"});
    CHECK(ok.code == 0);
    const auto rows = lines(ok.out);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        const auto j = nlohmann::json::parse(row);
        CHECK(j["pass"] == true);
        CHECK(j["max_rel_diff"].get<double>() < 1e-4);
    }
    CHECK(nlohmann::json::parse(rows[0])["loss"] == "rag");
    const auto bad = cli({"gradcheck", "--corrupt", "--losses", "kl"});
    CHECK(bad.code == 1);
    CHECK(nlohmann::json::parse(lines(bad.out).at(0))["pass"] == false);
}

TEST_CASE("cli pipeline on a small fixture") {
    testing::TempDir dir("cli");
    const std::string d = dir.path().string();
    REQUIRE(cli({"fixture", "--kind", "two_hop", "--n", "12", "--corpus-size", "50", "--seed", "5", "--out-dir", d})
                .code == 0);
    const std::string corpus = d + "/corpus.jsonl";
    const std::string dataset = d + "/dataset.jsonl";

    CHECK(cli({"ingest", "--corpus", corpus, "--dataset", dataset, "--subcorpus-out", d + "/sub.jsonl"}).code == 0);

    const auto r1 = cli({"retrieve", "--corpus", corpus, "--questions", dataset, "--output", d + "/r1.jsonl"});
    REQUIRE(r1.code == 0);
    const auto out1 = lines(testing::read_file(dir / "r1.jsonl"));
    REQUIRE(out1.size() == 12);
    const auto first = nlohmann::json::parse(out1[0]);
    CHECK(first["question_idx"] == 0);
    CHECK(first["pool_size"] == 30);
    CHECK(first["winner"]["passage_ids"].size() >= 1);
    CHECK(first["winner"].contains("score"));

    const auto r2 = cli({"retrieve", "--corpus", corpus, "--questions", dataset, "--subcorpus", d + "/sub.jsonl"});
    CHECK(r2.code == 0);
    CHECK(r2.out == testing::read_file(dir / "r1.jsonl"));

    const std::vector<std::string> train{"train", "--corpus", corpus, "--dataset", dataset, "--epochs", "2",
                                         "--batch-size", "4", "--seed", "1", "--out-head", d + "/head.jsonl"};
    const auto t1 = cli(train);
    REQUIRE(t1.code == 0);
    const auto curve = lines(t1.out);
    REQUIRE(curve.size() == 4);
    CHECK(curve[0] == "epoch,loss,retained_examples");
    const auto head1 = testing::read_file(dir / "head.jsonl");
    CHECK(cli(train).out == t1.out);
    CHECK(testing::read_file(dir / "head.jsonl") == head1);

    const auto e = cli({"eval", "--corpus", corpus, "--dataset", dataset, "--head-trained", d + "/head.jsonl", "--truth",
                        d + "/truth.jsonl", "--out", d + "/report"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("AdaPCR (Rerank)") != std::string::npos);
    const auto report = nlohmann::json::parse(testing::read_file(dir / "report/report.json"));
    CHECK(report["systems"].size() == 4);
    CHECK(testing::read_file(dir / "report/report.md") == e.out);

    CHECK(cli({"eval", "--corpus", corpus, "--dataset", dataset}).code == kExitConfig);
    CHECK(cli({"eval", "--corpus", corpus, "--dataset", dataset, "--systems", "adapcr,fixed_top2", "--out", d + "/r2"}).code == 0);
}

TEST_CASE("cli config file, flags override") {
    testing::TempDir dir("cfg");
    testing::write_file(dir / "run.conf", "# gradcheck settings\ndim = 4\nlosses = ce\n");
    const std::string conf = (dir / "run.conf").string();
    const auto from_file = cli({"--config", conf, "gradcheck"});
    CHECK(from_file.code == 0);
    CHECK(lines(from_file.out).size() == 1);
    const auto overridden = cli({"--config", conf, "gradcheck", "--losses", "rag,kl"});
    CHECK(lines(overridden.out).size() == 2);

    testing::write_file(dir / "bad.conf", "no_such_key = 1\n");
    CHECK(cli({"--config", (dir / "bad.conf").string(), "gradcheck"}).code == kExitConfig);
}
