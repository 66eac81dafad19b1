#include "adapcr/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "adapcr/embed.hpp"
#include "adapcr/error.hpp"
#include "adapcr/retrieval.hpp"
#include "adapcr/rng.hpp"
#include "json.hpp"

namespace adapcr {

using json = nlohmann::json;

const char* to_string(FixtureKind kind) noexcept {
    switch (kind) {
        case FixtureKind::SingleHop: return "single_hop";
        case FixtureKind::Redundant: return "redundant";
        case FixtureKind::TwoHop: return "two_hop";
    }
    return "unknown";
}

FixtureKind parse_fixture_kind(std::string_view name) {
    for (FixtureKind k : {FixtureKind::SingleHop, FixtureKind::Redundant, FixtureKind::TwoHop}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown fixture kind: " + std::string(name));
}

void FixtureSpec::validate() const {
    if (n_questions < 1) throw ConfigError("fixture needs at least one question");
    if (corpus_size < 10) throw ConfigError("fixture corpus_size must be at least 10");
    if (vocab_size < 1) throw ConfigError("fixture vocab_size must be positive");
    if (absent_answer_fraction < 0.0 || absent_answer_fraction > 1.0) {
        throw ConfigError("absent_answer_fraction must lie in [0, 1]");
    }
    if (embed_dim < 2) throw ConfigError("fixture embed_dim must be at least 2");
    if (k == 0 || k > subcorpus_limit) throw ConfigError("fixture k must lie in [1, subcorpus_limit]");
    if (!(margin >= 0.0)) throw ConfigError("fixture margin must be non-negative");
}

namespace {

// Per-question token slots.
enum Slot : std::uint32_t {
    kTopic = 0,
    kQ1,
    kQ2,
    kBridge0,  // kBridge0 .. kBridge0 + kBridgeCount - 1
    kAnswer0 = kBridge0 + 8,
    kAnswer1,
    kDecoy0,  // stands in for the answer when it is withheld
    kDecoy1,
    kSlotCount,
};
constexpr std::uint32_t kBridgeCount = 8;
constexpr std::size_t kMinDistractorLength = 16;
constexpr std::size_t kDistractorFiller = 4;
constexpr std::size_t kFillerPerGold = 3;
constexpr std::size_t kRedundantCopies = 2;

struct TokenRef {
    std::int64_t question;  // -1 for a vocabulary filler word
    std::uint32_t index;
};

using PassageTemplate = std::vector<TokenRef>;

enum class Role { A, B, Gold, Redundant, Distractor, Filler };

struct PlantedPassage {
    PassageTemplate tokens;
    Role role;
    std::int64_t owner;  // question index for planted passages
};

struct Builder {
    const FixtureSpec& spec;
    rng::Engine engine;
    std::vector<std::string> vocab;
    std::vector<std::array<std::string, kSlotCount>> question_tokens;
    std::unordered_set<std::string> used;
    std::vector<PlantedPassage> passages;
    std::vector<std::size_t> id_order;  // passage slot -> id rank
    std::vector<bool> answer_present;

    explicit Builder(const FixtureSpec& s) : spec(s), engine(rng::make_engine(s.seed, "fixture")) {}

    std::string random_word(std::size_t length) {
        std::string w;
        do {
            w.clear();
            for (std::size_t i = 0; i < length; ++i) w.push_back(static_cast<char>('a' + rng::uniform_index(engine, 26)));
        } while (used.contains(w));
        used.insert(w);
        return w;
    }

    // Planted tokens are 7 letters and fillers 5, so the two never collide.
    void draw_question_tokens(std::size_t q) {
        for (auto& t : question_tokens[q]) {
            if (!t.empty()) used.erase(t);
            t = random_word(7);
        }
    }

    TokenRef slot(std::size_t q, std::uint32_t s) const { return TokenRef{static_cast<std::int64_t>(q), s}; }
    TokenRef filler() { return TokenRef{-1, static_cast<std::uint32_t>(rng::uniform_index(engine, vocab.size()))}; }

    void add(PassageTemplate t, Role role, std::int64_t owner) { passages.push_back({std::move(t), role, owner}); }

    std::size_t planted_per_question() const {
        switch (spec.kind) {
            case FixtureKind::TwoHop: return 2;
            case FixtureKind::SingleHop: return 1;
            case FixtureKind::Redundant: return 1 + kRedundantCopies;
        }
        return 0;
    }

    void build_templates() {
        const std::size_t n = spec.n_questions;
        const std::size_t planted = n * planted_per_question();
        if (spec.corpus_size <= planted) {
            throw ConfigError("corpus_size " + std::to_string(spec.corpus_size) + " is too small for " +
                              std::to_string(n) + " " + to_string(spec.kind) + " questions");
        }
        for (std::size_t q = 0; q < n; ++q) {
            const std::uint32_t answer0 = answer_present[q] ? kAnswer0 : kDecoy0;
            const std::uint32_t answer1 = answer_present[q] ? kAnswer1 : kDecoy1;
            switch (spec.kind) {
                case FixtureKind::TwoHop: {
                    PassageTemplate a{slot(q, kQ1), slot(q, kQ2)};
                    PassageTemplate b{slot(q, kTopic)};
                    for (std::uint32_t i = 0; i < kBridgeCount; ++i) {
                        a.push_back(slot(q, kBridge0 + i));
                        b.push_back(slot(q, kBridge0 + i));
                    }
                    b.push_back(slot(q, answer0));
                    b.push_back(slot(q, answer1));
                    add(std::move(a), Role::A, static_cast<std::int64_t>(q));
                    add(std::move(b), Role::B, static_cast<std::int64_t>(q));
                    break;
                }
                case FixtureKind::SingleHop:
                case FixtureKind::Redundant: {
                    PassageTemplate gold{slot(q, kTopic), slot(q, kQ1), slot(q, kQ2), slot(q, answer0), slot(q, answer1)};
                    for (std::size_t i = 0; i < kFillerPerGold; ++i) gold.push_back(filler());
                    add(std::move(gold), Role::Gold, static_cast<std::int64_t>(q));
                    if (spec.kind == FixtureKind::Redundant) {
                        for (std::size_t c = 0; c < kRedundantCopies; ++c) {
                            PassageTemplate copy{slot(q, kTopic), slot(q, kQ1), slot(q, kQ2)};
                            for (std::size_t i = 0; i < kFillerPerGold + 2; ++i) copy.push_back(filler());
                            add(std::move(copy), Role::Redundant, static_cast<std::int64_t>(q));
                        }
                    }
                    break;
                }
            }
        }

        // Shared distractors: each question's (topic, q1) lands in k - 1 of
        // them, so the first stage holds A plus those distractors and B is
        // the next passage down. Picks favour the least-loaded distractors
        // (random among ties) to keep their lengths, and scores, even.
        const std::size_t available = spec.corpus_size - planted;
        const std::size_t want = std::max<std::size_t>(1, spec.k - 1);
        const std::size_t n_distractors = std::min(available, std::max(want, (n + 1) / 2));
        std::vector<PassageTemplate> distractors(n_distractors);
        const std::size_t per_question = std::min(want, n_distractors);
        std::vector<std::size_t> load(n_distractors, 0);
        std::vector<std::size_t> slots(n_distractors);
        for (std::size_t i = 0; i < n_distractors; ++i) slots[i] = i;
        for (std::size_t q = 0; q < n; ++q) {
            rng::shuffle(slots, engine);
            std::stable_sort(slots.begin(), slots.end(),
                             [&](std::size_t x, std::size_t y) { return load[x] < load[y]; });
            for (std::size_t r = 0; r < per_question; ++r) {
                ++load[slots[r]];
                auto& d = distractors[slots[r]];
                d.push_back(slot(q, kTopic));
                d.push_back(slot(q, kQ1));
            }
        }
        for (auto& d : distractors) {
            const std::size_t target = std::max(kMinDistractorLength, d.size() + kDistractorFiller);
            while (d.size() < target) d.push_back(filler());
            add(std::move(d), Role::Distractor, -1);
        }
        for (std::size_t i = planted + n_distractors; i < spec.corpus_size; ++i) {
            PassageTemplate f;
            const std::size_t len = 8 + rng::uniform_index(engine, 9);
            for (std::size_t j = 0; j < len; ++j) f.push_back(filler());
            add(std::move(f), Role::Filler, -1);
        }

        id_order.resize(passages.size());
        for (std::size_t i = 0; i < id_order.size(); ++i) id_order[i] = i;
        rng::shuffle(id_order, engine);
    }

    std::string passage_id(std::size_t slot_index) const {
        const std::size_t width = std::to_string(passages.size()).size();
        std::string digits = std::to_string(id_order[slot_index]);
        return "p" + std::string(width - std::min(width, digits.size()), '0') + digits;
    }

    std::string render(const PassageTemplate& t) const {
        std::string text;
        for (const TokenRef& r : t) {
            if (!text.empty()) text += ' ';
            text += r.question < 0 ? vocab[r.index] : question_tokens[static_cast<std::size_t>(r.question)][r.index];
        }
        return text;
    }

    Fixture render_fixture() const {
        Fixture fx;
        std::vector<std::size_t> by_id(passages.size());
        for (std::size_t i = 0; i < passages.size(); ++i) by_id[id_order[i]] = i;
        for (std::size_t rank = 0; rank < by_id.size(); ++rank) {
            const std::size_t i = by_id[rank];
            fx.corpus.add(passage_id(i), render(passages[i].tokens) + ".");
        }
        for (std::size_t q = 0; q < spec.n_questions; ++q) {
            const auto& tok = question_tokens[q];
            QAExample ex;
            ex.question = tok[kTopic] + " " + tok[kQ1] + " " + tok[kQ2] + "?";
            ex.answers = {tok[kAnswer0] + " " + tok[kAnswer1]};
            fx.dataset.push_back(std::move(ex));
        }
        for (std::size_t i = 0; i < passages.size(); ++i) {
            const auto& p = passages[i];
            if (p.owner < 0) continue;
            const auto q = static_cast<std::size_t>(p.owner);
            if (p.role == Role::A || p.role == Role::Gold) {
                fx.truth[q].insert(fx.truth[q].begin(), passage_id(i));
            } else if (p.role == Role::B) {
                fx.truth[q].push_back(passage_id(i));
            }
        }
        fx.answer_present = answer_present;
        return fx;
    }
};

// Beyond the plant itself, the first stage must separate its k-th and
// (k+1)-th passages and the winning pair must lead the pool, both by
// `margin`, so small head perturbations do not reshuffle the candidates.
bool check_plant(const Corpus& corpus, const Bm25Index& index, const Retriever& retriever, const QAExample& example,
                 const std::vector<std::string>& truth, std::size_t limit, double margin) {
    if (truth.size() != 2) return false;
    QAExample ex = example;
    ex.subcorpus_ids = preretrieve_subcorpus(index, ex.question, limit);
    const auto& ids = ex.subcorpus_ids;
    if (std::find(ids.begin(), ids.end(), truth[0]) == ids.end() ||
        std::find(ids.begin(), ids.end(), truth[1]) == ids.end()) {
        return false;
    }
    const auto sub = resolve_subcorpus(corpus, ex);
    const auto result = retriever.retrieve(ex.question, sub);
    for (const auto& single : result.candidates.singles) {
        if (single.passage_ids.front() == truth[1]) return false;
    }
    if (result.winner.stage != Stage::Pair || result.winner.passage_ids != truth) return false;
    if (margin <= 0.0) return true;

    RetrievalConfig wider = retriever.config();
    wider.k += 1;
    const Retriever probe = retriever.head() ? Retriever(retriever.provider(), *retriever.head(), wider)
                                             : Retriever(retriever.provider(), wider);
    const auto ranked = probe.first_stage(ex.question, sub);
    if (ranked.size() > wider.k - 1 && ranked[wider.k - 2].score - ranked[wider.k - 1].score < margin) return false;
    for (std::size_t i = 0; i < result.candidates.size(); ++i) {
        const Combination& c = result.candidates[i];
        if (c.passage_ids != truth && result.winner.score - c.score < margin) return false;
    }
    return true;
}

}  // namespace

bool two_hop_plant_holds(const Fixture& fixture, std::size_t question_idx, const FixtureSpec& spec) {
    const Bm25Index index(fixture.corpus);
    const HashEmbedder embedder(spec.embed_dim);
    const Retriever retriever(embedder, RetrievalConfig{spec.k, spec.subcorpus_limit, true});
    auto it = fixture.truth.find(question_idx);
    if (it == fixture.truth.end()) return false;
    return check_plant(fixture.corpus, index, retriever, fixture.dataset.at(question_idx), it->second,
                       spec.subcorpus_limit, spec.margin);
}

Fixture generate_fixture(const FixtureSpec& spec) {
    spec.validate();
    Builder b(spec);
    b.vocab.reserve(spec.vocab_size);
    for (std::size_t i = 0; i < spec.vocab_size; ++i) b.vocab.push_back(b.random_word(5));
    b.question_tokens.resize(spec.n_questions);
    for (std::size_t q = 0; q < spec.n_questions; ++q) b.draw_question_tokens(q);

    b.answer_present.assign(spec.n_questions, true);
    const auto n_absent = static_cast<std::size_t>(std::llround(spec.absent_answer_fraction * static_cast<double>(spec.n_questions)));
    if (n_absent > 0) {
        std::vector<std::size_t> order(spec.n_questions);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto pick = rng::make_engine(spec.seed, "fixture/absent");
        rng::shuffle(order, pick);
        for (std::size_t i = 0; i < n_absent; ++i) b.answer_present[order[i]] = false;
    }
    b.build_templates();

    Fixture fx = b.render_fixture();
    if (spec.kind != FixtureKind::TwoHop) return fx;

    const HashEmbedder hash(spec.embed_dim);
    const CachingProvider embedder(hash);
    const Retriever retriever(embedder, RetrievalConfig{spec.k, spec.subcorpus_limit, true});

    // Rounds re-check only re-drawn questions. Re-drawn tokens can shift the
    // scores of questions sharing a distractor, so once nothing is pending a
    // full pass runs, and any new failures start another round.
    std::vector<std::size_t> all(spec.n_questions);
    for (std::size_t q = 0; q < spec.n_questions; ++q) all[q] = q;
    std::vector<std::size_t> pending = all;
    bool full_pass = true;
    for (std::size_t round = 0; round + 1 < spec.max_attempts; ++round) {
        fx.stats.rounds = round + 1;
        const Bm25Index index(fx.corpus);
        std::vector<std::size_t> failed;
        for (std::size_t q : pending) {
            if (!check_plant(fx.corpus, index, retriever, fx.dataset[q], fx.truth[q], spec.subcorpus_limit, spec.margin)) {
                failed.push_back(q);
            }
        }
        if (failed.empty()) {
            if (full_pass) break;
            pending = all;
            full_pass = true;
            continue;
        }
        for (std::size_t q : failed) b.draw_question_tokens(q);
        const FixtureStats stats{0, fx.stats.resampled + failed.size(), fx.stats.rounds};
        fx = b.render_fixture();
        fx.stats = stats;
        pending = std::move(failed);
        full_pass = false;
    }

    const Bm25Index index(fx.corpus);
    fx.stats.verified = 0;
    for (std::size_t q = 0; q < spec.n_questions; ++q) {
        if (check_plant(fx.corpus, index, retriever, fx.dataset[q], fx.truth[q], spec.subcorpus_limit, spec.margin)) ++fx.stats.verified;
    }
    return fx;
}

void write_truth(std::ostream& out, const PlantedTruth& truth) {
    for (const auto& [q, ids] : truth) out << json{{"question_idx", q}, {"passage_ids", ids}}.dump() << '\n';
}

PlantedTruth read_truth(std::istream& in) {
    PlantedTruth truth;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            truth[rec.at("question_idx").get<std::size_t>()] = rec.at("passage_ids").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return truth;
}

PlantedTruth load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open " + path.string());
    return read_truth(in);
}

void write_fixture(const std::filesystem::path& dir, const Fixture& fixture) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw LookupError("cannot write " + (dir / name).string());
        return out;
    };
    auto corpus = open("corpus.jsonl");
    write_corpus(corpus, fixture.corpus);
    auto dataset = open("dataset.jsonl");
    write_dataset(dataset, fixture.dataset);
    auto truth = open("truth.jsonl");
    write_truth(truth, fixture.truth);
}

}  // namespace adapcr
