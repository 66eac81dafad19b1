#include "adapcr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adapcr/corpus.hpp"
#include "adapcr/embed.hpp"
#include "adapcr/error.hpp"
#include "adapcr/eval.hpp"
#include "adapcr/fixtures.hpp"
#include "adapcr/lmscore.hpp"
#include "adapcr/logging.hpp"
#include "adapcr/retrieval.hpp"
#include "adapcr/rng.hpp"
#include "adapcr/train.hpp"
#include "CLI11.hpp"
#include "json.hpp"

namespace adapcr {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Flags shared by the subcommands that embed and retrieve.
struct RetrievalFlags {
    std::string embedder = "hash";
    std::size_t dim = 256;
    std::size_t k = 5;
    std::size_t limit = 100;
    std::string subcorpus;
    bool allow_self_pairs = false;

    RetrievalConfig config() const {
        RetrievalConfig c{k, limit, !allow_self_pairs};
        c.validate();
        return c;
    }
};

void add_retrieval_flags(CLI::App* sub, RetrievalFlags& f) {
    sub->add_option("--embedder", f.embedder, "Embedding provider: hash or remote:URL")->capture_default_str();
    sub->add_option("--dim", f.dim, "Embedding dimension")->capture_default_str();
    sub->add_option("--k", f.k, "First-stage size")->capture_default_str();
    sub->add_option("--limit", f.limit, "BM25 sub-corpus size")->capture_default_str();
    sub->add_option("--subcorpus", f.subcorpus, "Sub-corpus cache JSONL; BM25 fills missing entries");
    sub->add_flag("--allow-self-pairs", f.allow_self_pairs, "Let a first-stage passage pair with itself");
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required ") + flag);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PreconditionError("cannot open " + path.string() + " for writing");
    return out;
}

std::unique_ptr<EmbeddingProvider> build_provider(const RetrievalFlags& f) {
    return make_provider(EmbeddingProviderSpec::parse(f.embedder, f.dim));
}

ProjectionHead head_or_identity(const std::string& path, std::size_t dim) {
    if (path.empty()) return ProjectionHead::identity(dim);
    ProjectionHead head = load_head(path);
    if (head.dim() != dim) {
        throw ConfigError("head " + path + " has dim " + std::to_string(head.dim()) + " but the embedder has " +
                          std::to_string(dim));
    }
    return head;
}

// Sub-corpora come from the cache file when given; BM25 fills the rest.
void attach_subcorpora(std::vector<QAExample>& dataset, const Corpus& corpus, const RetrievalFlags& f) {
    if (!f.subcorpus.empty()) load_subcorpus_cache(f.subcorpus, dataset, corpus);
    const bool missing = std::any_of(dataset.begin(), dataset.end(),
                                     [](const QAExample& e) { return e.subcorpus_ids.empty(); });
    if (!missing) return;
    const Bm25Index index(corpus);
    for (auto& ex : dataset) {
        if (ex.subcorpus_ids.empty()) ex.subcorpus_ids = preretrieve_subcorpus(index, ex.question, f.limit);
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config file: `key = value` lines, '#' comments. Keys name long flags.

std::map<std::string, std::string> read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        std::replace(key.begin(), key.end(), '_', '-');
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        kv[key] = value;
    }
    return kv;
}

// Fills options the command line left unset. Command-line flags win.
void apply_config(CLI::App& app, CLI::App* sub, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
        if (!opt) opt = app.get_option_no_throw("--" + key);
        if (!opt || key == "config" || key == "help") {
            throw ConfigError("config key '" + key + "' is not a flag of this subcommand");
        }
        if (opt->count() > 0) continue;
        opt->add_result(value);
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string corpus;
    std::string dataset;
    std::string subcorpus_out;
    std::size_t limit = 100;
};

int run_ingest(const IngestArgs& a, std::ostream& out) {
    require(a.corpus, "--corpus");
    if (!a.subcorpus_out.empty()) require(a.dataset, "--dataset (needed by --subcorpus-out)");
    if (a.limit == 0) throw ConfigError("--limit must be positive");
    const Corpus corpus = ingest_corpus(a.corpus);
    json summary{{"passages", corpus.size()}};
    if (!a.dataset.empty()) {
        auto dataset = load_dataset(a.dataset);
        summary["questions"] = dataset.size();
        if (!a.subcorpus_out.empty()) {
            const Bm25Index index(corpus);
            preretrieve_all(index, dataset, a.limit);
            auto f = open_out(a.subcorpus_out);
            write_subcorpus_cache(f, dataset);
            summary["subcorpus"] = a.subcorpus_out;
        }
    }
    log::info("ingest", summary);
    out << summary.dump() << '\n';
    return kExitOk;
}

struct FixtureArgs {
    std::string kind = "two_hop";
    std::size_t n = 10;
    std::size_t corpus_size = 50;
    std::size_t vocab_size = 2000;
    std::uint64_t seed = 0;
    double absent_fraction = 0.0;
    std::size_t dim = 256;
    std::size_t k = 5;
    std::string out_dir;
};

int run_fixture(const FixtureArgs& a, std::ostream& out) {
    require(a.out_dir, "--out-dir");
    FixtureSpec spec;
    spec.kind = parse_fixture_kind(a.kind);
    spec.n_questions = a.n;
    spec.corpus_size = a.corpus_size;
    spec.vocab_size = a.vocab_size;
    spec.seed = a.seed;
    spec.absent_answer_fraction = a.absent_fraction;
    spec.embed_dim = a.dim;
    spec.k = a.k;
    spec.validate();
    const Fixture fx = generate_fixture(spec);
    write_fixture(a.out_dir, fx);
    const json summary{{"kind", to_string(spec.kind)},
                       {"questions", fx.dataset.size()},
                       {"passages", fx.corpus.size()},
                       {"verified", fx.stats.verified},
                       {"resampled", fx.stats.resampled},
                       {"out_dir", a.out_dir}};
    log::info("fixture", summary);
    out << summary.dump() << '\n';
    return kExitOk;
}

struct RetrieveArgs {
    std::string corpus;
    std::string questions;
    std::string head;
    std::string output;
    RetrievalFlags r;
};

int run_retrieve(const RetrieveArgs& a, std::ostream& out) {
    require(a.corpus, "--corpus");
    require(a.questions, "--questions");
    const RetrievalConfig config = a.r.config();
    const auto base = build_provider(a.r);
    const CachingProvider provider(*base);
    const ProjectionHead head = head_or_identity(a.head, provider.dim());

    const Corpus corpus = ingest_corpus(a.corpus);
    auto dataset = load_dataset(a.questions);
    attach_subcorpora(dataset, corpus, a.r);

    std::ofstream file;
    if (!a.output.empty()) file = open_out(a.output);
    std::ostream& sink = a.output.empty() ? out : file;

    const Retriever retriever(provider, head, config);
    for (std::size_t q = 0; q < dataset.size(); ++q) {
        const auto result = retriever.retrieve(dataset[q].question, resolve_subcorpus(corpus, dataset[q]));
        const json rec{{"question_idx", q},
                       {"winner", {{"passage_ids", result.winner.passage_ids}, {"score", result.winner.score}}},
                       {"pool_size", result.candidates.size()}};
        sink << rec.dump() << '\n';
    }
    log::info("retrieve", {{"questions", dataset.size()}, {"k", config.k}});
    return kExitOk;
}

struct TrainArgs {
    std::string dataset;
    std::string corpus;
    std::string loss = "rag";
    double gamma = 0.1;
    double beta = 1.0;
    std::size_t top_k_marginal = 5;
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    std::string scorer = "mock";
    std::string out_head;
    std::string init_head;
    std::string loss_curve;
    std::string cache;
    std::string negatives = "passages";
    bool balance_stages = false;
    RetrievalFlags r;
};

int run_train(const TrainArgs& a, std::ostream& out) {
    require(a.dataset, "--dataset");
    require(a.corpus, "--corpus");
    require(a.out_head, "--out-head");
    TrainingConfig config;
    config.loss = parse_loss(a.loss);
    config.gamma = a.gamma;
    config.beta = a.beta;
    config.top_k_marginal = a.top_k_marginal;
    config.learning_rate = a.lr;
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.seed = a.seed;
    config.in_batch_negatives = a.negatives != "none";
    if (config.in_batch_negatives) config.negative_source = parse_negative_source(a.negatives);
    config.balance_stages = a.balance_stages;
    config.validate();
    const RetrievalConfig retrieval = a.r.config();
    const auto scorer = make_scorer(a.scorer);
    const auto provider = build_provider(a.r);
    ProjectionHead head = head_or_identity(a.init_head, provider->dim());

    const Corpus corpus = ingest_corpus(a.corpus);
    auto dataset = load_dataset(a.dataset);
    attach_subcorpora(dataset, corpus, a.r);

    ScoreCache cache = a.cache.empty() ? ScoreCache() : ScoreCache(a.cache);
    cache.load();
    Trainer trainer(corpus, *provider, *scorer, cache, retrieval, config);
    trainer.on_epoch = [](const EpochStat& s) {
        log::info("epoch", {{"epoch", s.epoch}, {"loss", s.loss}, {"retained_examples", s.retained_examples}});
    };
    const TrainResult result = trainer.train(dataset, std::move(head));
    cache.save();
    save_head(a.out_head, result.head);

    if (a.loss_curve.empty()) {
        write_loss_curve(out, result.curve);
    } else {
        auto f = open_out(a.loss_curve);
        write_loss_curve(f, result.curve);
    }
    log::info("train_done", {{"retained", result.retained},
                             {"dropped", result.dropped},
                             {"clamped", result.clamped},
                             {"out_head", a.out_head}});
    return kExitOk;
}

struct EvalArgs {
    std::string dataset;
    std::string corpus;
    std::string systems = "no_retrieval,fixed_top2,adapcr,adapcr_rerank";
    std::string head_trained;
    std::string head_identity;
    std::string scorer = "mock";
    std::uint64_t seed = 0;
    std::string out;
    std::string truth;
    std::string cache;
    RetrievalFlags r;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
    require(a.dataset, "--dataset");
    require(a.corpus, "--corpus");
    require(a.out, "--out");
    CompareOptions options;
    options.systems.clear();
    for (const auto& name : split_list(a.systems)) options.systems.push_back(parse_system(name));
    if (options.systems.empty()) throw ConfigError("--systems names no system");
    const bool rerank = std::find(options.systems.begin(), options.systems.end(), SystemKind::AdaPcrRerank) !=
                        options.systems.end();
    if (rerank) require(a.head_trained, "--head-trained (needed by adapcr_rerank)");
    options.retrieval = a.r.config();
    const auto scorer = make_scorer(a.scorer);
    const auto base = build_provider(a.r);
    const CachingProvider provider(*base);
    const ProjectionHead identity = head_or_identity(a.head_identity, provider.dim());
    const ProjectionHead trained = rerank ? head_or_identity(a.head_trained, provider.dim()) : identity;

    const Corpus corpus = ingest_corpus(a.corpus);
    auto dataset = load_dataset(a.dataset);
    attach_subcorpora(dataset, corpus, a.r);
    PlantedTruth truth;
    if (!a.truth.empty()) truth = load_truth(a.truth);

    ScoreCache cache = a.cache.empty() ? ScoreCache() : ScoreCache(a.cache);
    cache.load();
    const ComparisonReport report =
        compare_systems(dataset, corpus, provider, identity, trained, *scorer, cache, options, truth);
    cache.save();

    const fs::path dir(a.out);
    fs::create_directories(dir);
    {
        auto f = open_out(dir / "report.json");
        write_report_json(f, report);
    }
    {
        auto f = open_out(dir / "report.md");
        write_report_markdown(f, report);
    }
    write_report_markdown(out, report);
    log::info("eval", {{"questions", report.n_examples}, {"seed", a.seed}, {"out", a.out}});
    return kExitOk;
}

struct GradcheckArgs {
    std::size_t dim = 8;
    std::size_t pool = 6;
    std::size_t batch = 4;
    std::uint64_t seed = 0;
    double gamma = 0.1;
    double beta = 1.0;
    double step = 1e-5;
    double threshold = 1e-4;
    std::string losses = "rag,kl,ce";
    bool corrupt = false;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    if (a.dim == 0 || a.pool == 0 || a.batch == 0) throw ConfigError("--dim, --pool and --batch must be positive");
    if (!(a.step > 0.0)) throw ConfigError("--step must be positive");
    std::vector<LossKind> kinds;
    for (const auto& name : split_list(a.losses)) kinds.push_back(parse_loss(name));
    if (kinds.empty()) throw ConfigError("--losses names no loss");

    const RandomBatch rb = random_batch(a.dim, a.pool, a.batch, rng::derive(a.seed, "gradcheck"));
    GradCheckOptions options;
    options.step = a.step;
    options.corrupt = a.corrupt;

    bool ok = true;
    json worst;
    double worst_rel = -1.0;
    for (LossKind kind : kinds) {
        TrainingConfig config;
        config.loss = kind;
        config.gamma = a.gamma;
        config.beta = a.beta;
        config.validate();
        const GradientReport r = gradcheck(rb.batch, rb.head, config, options);
        const std::size_t per = a.dim * a.dim;
        const std::size_t local = r.worst_index % per;
        const json coord{{"loss", to_string(kind)},
                         {"matrix", r.worst_index < per ? "query" : "passage"},
                         {"row", local / a.dim},
                         {"col", local % a.dim},
                         {"analytic", r.analytic[r.worst_index]},
                         {"numeric", r.numeric[r.worst_index]}};
        const bool pass = r.max_rel_diff < a.threshold;
        ok = ok && pass;
        out << json{{"loss", to_string(kind)},
                    {"max_rel_diff", r.max_rel_diff},
                    {"max_abs_diff", r.max_abs_diff},
                    {"worst", coord},
                    {"pass", pass}}
                   .dump()
            << '\n';
        if (r.max_rel_diff > worst_rel) {
            worst_rel = r.max_rel_diff;
            worst = coord;
            worst["rel_diff"] = r.max_rel_diff;
        }
    }
    if (!ok) {
        log::error("gradcheck_failed", {{"threshold", a.threshold}, {"worst", worst}});
        return kExitRuntime;
    }
    log::info("gradcheck_passed", {{"threshold", a.threshold}, {"max_rel_diff", worst_rel}});
    return kExitOk;
}

int exit_code_for(const Error& e) {
    return e.category() == ErrorCategory::Config ? kExitConfig : kExitRuntime;
}

void report_failure(const char* category, const std::string& message) {
    log::error("failed", {{"category", category}, {"message", message}});
    if (log::level() > log::Level::Error) std::cerr << "error[" << category << "]: " << message << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Adaptive passage-combination retrieval toolkit", "adapcr"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.fallthrough();
    std::string config_path;
    std::string log_level = "info";
    app.add_option("--config", config_path, "File of key = value lines; flags override it");
    app.add_option("--log-level", log_level, "debug, info, warn, error or off")->capture_default_str();

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Validate a corpus (and dataset), optionally caching BM25 sub-corpora");
    s_ingest->add_option("--corpus", ingest.corpus, "Corpus JSONL");
    s_ingest->add_option("--dataset", ingest.dataset, "Dataset JSONL");
    s_ingest->add_option("--subcorpus-out", ingest.subcorpus_out, "Write the BM25 sub-corpus cache here");
    s_ingest->add_option("--limit", ingest.limit, "Sub-corpus size")->capture_default_str();

    FixtureArgs fixture;
    auto* s_fixture = app.add_subcommand("fixture", "Generate a seeded synthetic corpus and question set");
    s_fixture->add_option("--kind", fixture.kind, "single_hop, redundant or two_hop")->capture_default_str();
    s_fixture->add_option("--n", fixture.n, "Number of questions")->capture_default_str();
    s_fixture->add_option("--corpus-size", fixture.corpus_size, "Number of passages")->capture_default_str();
    s_fixture->add_option("--vocab-size", fixture.vocab_size, "Filler vocabulary size")->capture_default_str();
    s_fixture->add_option("--seed", fixture.seed, "Random seed")->capture_default_str();
    s_fixture->add_option("--absent-fraction", fixture.absent_fraction, "Share of questions without a planted answer")
        ->capture_default_str();
    s_fixture->add_option("--dim", fixture.dim, "Embedding dimension of the two_hop self-check")->capture_default_str();
    s_fixture->add_option("--k", fixture.k, "First-stage size of the two_hop self-check")->capture_default_str();
    s_fixture->add_option("--out-dir", fixture.out_dir, "Output directory");

    RetrieveArgs retrieve;
    auto* s_retrieve = app.add_subcommand("retrieve", "Select the best passage combination per question");
    s_retrieve->add_option("--corpus", retrieve.corpus, "Corpus JSONL");
    s_retrieve->add_option("--questions", retrieve.questions, "Dataset JSONL");
    s_retrieve->add_option("--head", retrieve.head, "Projection head checkpoint (identity when omitted)");
    s_retrieve->add_option("--output", retrieve.output, "Output JSONL (stdout when omitted)");
    add_retrieval_flags(s_retrieve, retrieve.r);

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "Train the projection head");
    s_train->add_option("--dataset", train.dataset, "Dataset JSONL");
    s_train->add_option("--corpus", train.corpus, "Corpus JSONL");
    s_train->add_option("--loss", train.loss, "rag, kl or ce")->capture_default_str();
    s_train->add_option("--gamma", train.gamma, "Retriever softmax temperature")->capture_default_str();
    s_train->add_option("--beta", train.beta, "LM temperature of the KL loss")->capture_default_str();
    s_train->add_option("--top-k-marginal", train.top_k_marginal, "Candidates in the RAG marginal")
        ->capture_default_str();
    s_train->add_option("--epochs", train.epochs, "Epochs")->capture_default_str();
    s_train->add_option("--batch-size", train.batch_size, "Batch size")->capture_default_str();
    s_train->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
    s_train->add_option("--seed", train.seed, "Random seed")->capture_default_str();
    s_train->add_option("--scorer", train.scorer, "mock or remote:URL")->capture_default_str();
    s_train->add_option("--out-head", train.out_head, "Where to write the trained head");
    s_train->add_option("--init-head", train.init_head, "Starting head (identity when omitted)");
    s_train->add_option("--loss-curve", train.loss_curve, "Loss curve CSV (stdout when omitted)");
    s_train->add_option("--cache", train.cache, "Persistent LM score cache JSONL");
    s_train->add_option("--negatives", train.negatives, "In-batch negatives: passages, combinations or none")
        ->capture_default_str();
    s_train->add_flag("--balance-stages", train.balance_stages, "Keep a single and a pair in the RAG marginal");
    add_retrieval_flags(s_train, train.r);

    EvalArgs eval;
    auto* s_eval = app.add_subcommand("eval", "Compare retrieval systems on a dataset");
    s_eval->add_option("--dataset", eval.dataset, "Dataset JSONL");
    s_eval->add_option("--corpus", eval.corpus, "Corpus JSONL");
    s_eval->add_option("--systems", eval.systems, "Comma-separated systems")->capture_default_str();
    s_eval->add_option("--head-trained", eval.head_trained, "Trained head for adapcr_rerank");
    s_eval->add_option("--head-identity", eval.head_identity, "Untrained head (identity when omitted)");
    s_eval->add_option("--scorer", eval.scorer, "mock or remote:URL")->capture_default_str();
    s_eval->add_option("--seed", eval.seed, "Random seed")->capture_default_str();
    s_eval->add_option("--out", eval.out, "Directory for report.json and report.md");
    s_eval->add_option("--truth", eval.truth, "Planted truth JSONL, enables gold-hit counts");
    s_eval->add_option("--cache", eval.cache, "Persistent LM score cache JSONL");
    add_retrieval_flags(s_eval, eval.r);

    GradcheckArgs gc;
    auto* s_gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    s_gc->add_option("--dim", gc.dim, "Embedding dimension")->capture_default_str();
    s_gc->add_option("--pool", gc.pool, "Candidates per example")->capture_default_str();
    s_gc->add_option("--batch", gc.batch, "Examples per batch")->capture_default_str();
    s_gc->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
    s_gc->add_option("--gamma", gc.gamma, "Retriever softmax temperature")->capture_default_str();
    s_gc->add_option("--beta", gc.beta, "LM temperature of the KL loss")->capture_default_str();
    s_gc->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
    s_gc->add_option("--threshold", gc.threshold, "Maximum relative error")->capture_default_str();
    s_gc->add_option("--losses", gc.losses, "Comma-separated losses")->capture_default_str();
    s_gc->add_flag("--corrupt", gc.corrupt)->group("");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("adapcr");

    std::ostringstream cli_err;
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int cli_code = app.exit(e, out, cli_err);
        if (cli_code == 0) return kExitOk;
        const bool usage = dynamic_cast<const CLI::ExtrasError*>(&e) || dynamic_cast<const CLI::ArgumentMismatch*>(&e) ||
                           dynamic_cast<const CLI::OptionNotFound*>(&e) || dynamic_cast<const CLI::HorribleError*>(&e);
        std::cerr << cli_err.str();
        report_failure(usage ? "usage" : "config", e.what());
        return usage ? kExitUsage : kExitConfig;
    }

    CLI::App* sub = nullptr;
    for (CLI::App* s : {s_ingest, s_fixture, s_retrieve, s_train, s_eval, s_gc}) {
        if (s->parsed()) sub = s;
    }

    try {
        log::set_level(log::parse_level(log_level));
        if (!config_path.empty()) apply_config(app, sub, read_config(config_path));
        log::set_level(log::parse_level(log_level));
        if (!sub) {
            out << app.help();
            report_failure("usage", "a subcommand is required");
            return kExitUsage;
        }
        if (sub == s_ingest) return run_ingest(ingest, out);
        if (sub == s_fixture) return run_fixture(fixture, out);
        if (sub == s_retrieve) return run_retrieve(retrieve, out);
        if (sub == s_train) return run_train(train, out);
        if (sub == s_eval) return run_eval(eval, out);
        return run_gradcheck(gc, out);
    } catch (const Error& e) {
        report_failure(to_string(e.category()), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        report_failure("internal", e.what());
        return kExitRuntime;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout);
}

}  // namespace adapcr
