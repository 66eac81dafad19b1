#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "adapcr/cli.hpp"
#include "adapcr/error.hpp"
#include "adapcr/eval.hpp"
#include "adapcr/fixtures.hpp"
#include "adapcr/retrieval.hpp"
#include "adapcr/train.hpp"

namespace py = pybind11;
using namespace adapcr;

namespace {

using PassageRows = std::vector<std::pair<std::string, std::string>>;

Corpus to_corpus(const PassageRows& rows) {
    Corpus c;
    for (const auto& [id, text] : rows) c.add(id, text);
    return c;
}

PassageRows from_corpus(const Corpus& c) {
    PassageRows rows;
    for (const auto& p : c) rows.emplace_back(p.id, p.text);
    return rows;
}

std::vector<QAExample> to_dataset(const py::list& rows) {
    std::vector<QAExample> out;
    for (const auto& item : rows) {
        const auto d = item.cast<py::dict>();
        QAExample ex;
        ex.question = d["question"].cast<std::string>();
        ex.answers = d["answers"].cast<std::vector<std::string>>();
        if (d.contains("subcorpus_ids")) ex.subcorpus_ids = d["subcorpus_ids"].cast<std::vector<std::string>>();
        out.push_back(std::move(ex));
    }
    return out;
}

py::dict combination_dict(const Combination& c) {
    py::dict d;
    d["passage_ids"] = c.passage_ids;
    d["score"] = c.score;
    d["stage"] = c.stage == Stage::Single ? "single" : "pair";
    return d;
}

py::dict fixture(const std::string& kind, std::size_t n, std::size_t corpus_size, std::uint64_t seed,
                 double absent_fraction, std::size_t dim, std::size_t k) {
    FixtureSpec spec;
    spec.kind = parse_fixture_kind(kind);
    spec.n_questions = n;
    spec.corpus_size = corpus_size;
    spec.seed = seed;
    spec.absent_answer_fraction = absent_fraction;
    spec.embed_dim = dim;
    spec.k = k;
    const Fixture fx = generate_fixture(spec);
    py::list dataset;
    for (const auto& ex : fx.dataset) {
        py::dict d;
        d["question"] = ex.question;
        d["answers"] = ex.answers;
        dataset.append(d);
    }
    py::dict out;
    out["corpus"] = from_corpus(fx.corpus);
    out["dataset"] = dataset;
    out["truth"] = fx.truth;
    out["answer_present"] = fx.answer_present;
    out["verified"] = fx.stats.verified;
    return out;
}

py::dict retrieve_one(const PassageRows& subcorpus, const std::string& question, std::size_t k, std::size_t dim,
                  bool dedupe_self_pairs) {
    std::vector<Passage> passages;
    for (const auto& [id, text] : subcorpus) passages.push_back(Passage{id, text, tokenize(text).size()});
    const HashEmbedder embedder(dim);
    const Retriever retriever(embedder, RetrievalConfig{k, std::max<std::size_t>(k, 100), dedupe_self_pairs});
    const auto result = retriever.retrieve(question, passages);
    py::list candidates;
    for (const auto& c : result.candidates.all()) candidates.append(combination_dict(c));
    py::dict out;
    out["winner"] = combination_dict(result.winner);
    out["candidates"] = candidates;
    return out;
}

py::dict train_head(const PassageRows& corpus_rows, const py::list& dataset_rows, const std::string& loss, std::size_t epochs,
               std::size_t batch_size, double lr, std::uint64_t seed, std::size_t dim, std::size_t k) {
    const Corpus corpus = to_corpus(corpus_rows);
    const auto dataset = to_dataset(dataset_rows);
    TrainingConfig cfg;
    cfg.loss = parse_loss(loss);
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = lr;
    cfg.seed = seed;
    const HashEmbedder embedder(dim);
    const MockScorer scorer;
    ScoreCache cache;
    TrainResult result;
    {
        py::gil_scoped_release release;
        const Trainer trainer(corpus, embedder, scorer, cache, RetrievalConfig{k, 100, true}, cfg);
        result = trainer.train(dataset, ProjectionHead::identity(dim));
    }
    py::list curve;
    for (const auto& e : result.curve) curve.append(py::make_tuple(e.epoch, e.loss, e.retained_examples));
    py::dict out;
    out["curve"] = curve;
    out["query"] = result.head.query;
    out["passage"] = result.head.passage;
    out["retained"] = result.retained;
    out["dropped"] = result.dropped;
    return out;
}

py::dict grad_check(std::size_t dim, std::size_t pool, std::size_t batch, std::uint64_t seed, const std::string& loss,
                    double gamma) {
    const auto rb = random_batch(dim, pool, batch, seed);
    TrainingConfig cfg;
    cfg.loss = parse_loss(loss);
    cfg.gamma = gamma;
    const auto r = gradcheck(rb.batch, rb.head, cfg);
    py::dict out;
    out["max_rel_diff"] = r.max_rel_diff;
    out["max_abs_diff"] = r.max_abs_diff;
    out["analytic"] = r.analytic;
    out["numeric"] = r.numeric;
    return out;
}

py::tuple cli(const std::vector<std::string>& args) {
    std::vector<std::string> argv{"adapcr"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream out;
    int code;
    {
        py::gil_scoped_release release;
        code = run_cli(argv, out);
    }
    return py::make_tuple(code, out.str());
}

}  // namespace

PYBIND11_MODULE(_adapcr, m) {
    m.doc() = "Adaptive passage-combination retrieval core";

    py::register_exception<Error>(m, "AdapcrError", PyExc_RuntimeError);

    m.def("tokenize", [](const std::string& s) { return tokenize(s); }, py::arg("text"));
    m.def("hash_embed", [](const std::string& s, std::size_t dim, std::uint64_t seed) {
        return EmbeddingVector(deterministic_hash_embed(s, dim, seed));
    }, py::arg("text"), py::arg("dim") = 256, py::arg("seed") = 0);
    m.def("concat_query", [](const std::string& p, const std::string& q) { return concat_query(p, q); },
          py::arg("passage_text"), py::arg("question_text"));
    m.def("bm25_top", [](const PassageRows& corpus, const std::string& question, std::size_t limit) {
        const Corpus c = to_corpus(corpus);
        return preretrieve_subcorpus(Bm25Index(c), question, limit);
    }, py::arg("corpus"), py::arg("question"), py::arg("limit") = 100);

    m.def("normalize_answer", [](const std::string& s) { return normalize_answer(s); }, py::arg("text"));
    m.def("exact_match", [](const std::string& p, const std::vector<std::string>& g) { return exact_match(p, g); },
          py::arg("prediction"), py::arg("golds"));
    m.def("answer_f1", [](const std::string& p, const std::vector<std::string>& g) { return answer_f1(p, g); },
          py::arg("prediction"), py::arg("golds"));

    m.def("normalize_pret", [](const std::vector<double>& s, double gamma) { return normalize_pret(s, gamma).probabilities; },
          py::arg("scores"), py::arg("gamma") = 0.1);
    m.def("pool_loss", [](const std::string& loss, const std::vector<double>& scores, const std::vector<double>& lls,
                          double gamma, double beta, std::size_t top_k) {
        TrainingConfig cfg;
        cfg.gamma = gamma;
        cfg.beta = beta;
        cfg.top_k_marginal = top_k;
        const auto pl = pool_loss(parse_loss(loss), scores, lls, cfg);
        return py::make_tuple(pl.loss, pl.d_scores);
    }, py::arg("loss"), py::arg("scores"), py::arg("log_likelihoods"), py::arg("gamma") = 0.1, py::arg("beta") = 1.0,
       py::arg("top_k_marginal") = 5);
    m.def("mock_lm_score", [](const std::vector<std::string>& context, const std::string& question, const std::string& answer) {
        return mock_lm_score(ScoreRequest{context, question, answer}).log_likelihood;
    }, py::arg("context"), py::arg("question"), py::arg("answer"));

    m.def("generate_fixture", &fixture, py::arg("kind") = "two_hop", py::arg("n") = 10, py::arg("corpus_size") = 50,
          py::arg("seed") = 0, py::arg("absent_fraction") = 0.0, py::arg("dim") = 256, py::arg("k") = 5);
    m.def("retrieve", &retrieve_one, py::arg("subcorpus"), py::arg("question"), py::arg("k") = 5, py::arg("dim") = 256,
          py::arg("dedupe_self_pairs") = true);
    m.def("train", &train_head, py::arg("corpus"), py::arg("dataset"), py::arg("loss") = "rag", py::arg("epochs") = 5,
          py::arg("batch_size") = 8, py::arg("lr") = 1e-2, py::arg("seed") = 0, py::arg("dim") = 256, py::arg("k") = 5);
    m.def("gradcheck", &grad_check, py::arg("dim") = 8, py::arg("pool") = 6, py::arg("batch") = 4, py::arg("seed") = 0,
          py::arg("loss") = "rag", py::arg("gamma") = 0.1);
    m.def("run_cli", &cli, py::arg("args"));
}
