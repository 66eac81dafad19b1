#include "adapcr/lmscore.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "adapcr/error.hpp"
#include "http_client.hpp"
#include "json.hpp"

namespace adapcr {

using json = nlohmann::json;

MockScorer::MockScorer(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("mock scorer epsilon must lie in (0, 0.5)");
}

std::vector<double> MockScorer::token_log_probs(const ScoreRequest& request) const {
    const auto answer_tokens = tokenize(request.answer);
    if (answer_tokens.empty()) throw ContractError("answer has no tokens");

    // Context passages in combination order, then the question: "[d; x]".
    std::unordered_set<std::string> visible;
    for (const auto& passage : request.context_passages)
        for (auto& t : tokenize(passage)) visible.insert(std::move(t));
    for (auto& t : tokenize(request.question)) visible.insert(std::move(t));

    const double covered = std::log(epsilon_ + (1.0 - 2.0 * epsilon_));
    const double missing = std::log(epsilon_);
    std::vector<double> out;
    out.reserve(answer_tokens.size());
    for (const auto& t : answer_tokens) out.push_back(visible.contains(t) ? covered : missing);
    return out;
}

LmScore MockScorer::score(const ScoreRequest& request) const {
    const auto per_token = token_log_probs(request);
    double total = 0.0;
    for (double lp : per_token) total += lp;
    return LmScore{total, per_token.size()};
}

LmScore mock_lm_score(const ScoreRequest& request, double epsilon) { return MockScorer(epsilon).score(request); }

// ---------------------------------------------------------------------------

RemoteScorer::RemoteScorer(std::string endpoint, int max_attempts, int backoff_ms)
    : endpoint_(std::move(endpoint)), max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
    if (endpoint_.empty()) throw ConfigError("remote scorer requires an endpoint");
}

LmScore RemoteScorer::score(const ScoreRequest& request) const {
    if (request.answer.empty()) throw ContractError("score request needs a non-empty answer");
    const json body{{"context", request.context_passages}, {"question", request.question}, {"answer", request.answer}};
    const json reply = detail::post_json(endpoint_, "/score", body, {max_attempts_, backoff_ms_});
    if (!reply.is_object()) throw ContractError("/score reply is not an object");
    auto ll = reply.find("log_likelihood");
    if (ll == reply.end() || !ll->is_number()) throw ContractError("/score reply lacks a numeric log_likelihood");
    const double value = ll->get<double>();
    if (!std::isfinite(value) || value > 0.0) {
        throw ContractError("/score returned log_likelihood " + std::to_string(value) + "; must be finite and <= 0");
    }
    auto tc = reply.find("token_count");
    if (tc == reply.end() || !tc->is_number_integer() || tc->get<long long>() <= 0) {
        throw ContractError("/score reply lacks a positive integer token_count");
    }
    return LmScore{value, tc->get<std::size_t>()};
}

LmScore remote_lm_score(const std::string& endpoint, const ScoreRequest& request) {
    return RemoteScorer(endpoint).score(request);
}

std::unique_ptr<AnswerScorer> make_scorer(std::string_view spec) {
    if (spec == "mock") return std::make_unique<MockScorer>();
    constexpr std::string_view prefix = "remote:";
    if (spec.starts_with(prefix) && spec.size() > prefix.size()) {
        return std::make_unique<RemoteScorer>(std::string(spec.substr(prefix.size())));
    }
    throw ConfigError("unknown scorer: " + std::string(spec) + " (expected mock or remote:URL)");
}

LmScore CountingScorer::score(const ScoreRequest& request) const {
    ++calls_;
    return inner_.score(request);
}

// ---------------------------------------------------------------------------

std::optional<LmScore> ScoreCache::lookup(const ScoreKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ScoreCache::insert(const ScoreKey& key, const LmScore& score) {
    std::lock_guard lock(mutex_);
    entries_.insert_or_assign(key, score);
}

std::size_t ScoreCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::map<ScoreKey, LmScore> ScoreCache::snapshot() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

void ScoreCache::write(std::ostream& out) const {
    std::lock_guard lock(mutex_);
    for (const auto& [key, score] : entries_) {
        out << json{{"passage_ids", key.passage_ids},
                    {"question_idx", key.question_idx},
                    {"answer", key.answer},
                    {"log_likelihood", score.log_likelihood},
                    {"token_count", score.token_count}}
                   .dump()
            << '\n';
    }
}

void ScoreCache::read(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::map<ScoreKey, LmScore> loaded;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            ScoreKey key{rec.at("passage_ids").get<std::vector<std::string>>(), rec.at("question_idx").get<std::size_t>(),
                         rec.at("answer").get<std::string>()};
            loaded.insert_or_assign(std::move(key), LmScore{rec.at("log_likelihood").get<double>(),
                                                            rec.at("token_count").get<std::size_t>()});
        } catch (const json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    std::lock_guard lock(mutex_);
    for (auto& [k, v] : loaded) entries_.insert_or_assign(k, v);
}

void ScoreCache::load() {
    if (!backing_file_ || !std::filesystem::exists(*backing_file_)) return;
    std::ifstream in(*backing_file_);
    if (!in) throw LookupError("cannot open " + backing_file_->string());
    read(in);
}

void ScoreCache::save() const {
    if (!backing_file_) return;
    std::ofstream out(*backing_file_);
    if (!out) throw LookupError("cannot write " + backing_file_->string());
    write(out);
}

// ---------------------------------------------------------------------------

ScoreRequest make_request(const Combination& combination, const Corpus& corpus, const QAExample& example) {
    if (example.answers.empty()) throw ContractError("example has no gold answer");
    ScoreRequest request;
    for (const auto& id : combination.passage_ids) request.context_passages.push_back(corpus.at(id).text);
    request.question = example.question;
    request.answer = example.answers.front();
    return request;
}

LmScore score_combination(const Combination& combination, const Corpus& corpus, const QAExample& example,
                          std::size_t question_idx, const AnswerScorer& scorer, ScoreCache& cache) {
    ScoreKey key{combination.passage_ids, question_idx, example.answers.at(0)};
    if (auto hit = cache.lookup(key)) return *hit;
    const LmScore score = scorer.score(make_request(combination, corpus, example));
    cache.insert(key, score);
    return score;
}

std::vector<ScoredCandidate> score_pool(const CandidateSet& candidates, const QAExample& example,
                                        std::size_t question_idx, const Corpus& corpus, const AnswerScorer& scorer,
                                        ScoreCache& cache) {
    if (example.answers.empty()) throw ContractError("example has no gold answer");
    std::vector<ScoredCandidate> out;
    out.reserve(candidates.size());
    std::vector<std::pair<ScoreKey, LmScore>> fresh;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Combination& c = candidates[i];
        ScoreKey key{c.passage_ids, question_idx, example.answers.front()};
        if (auto hit = cache.lookup(key)) {
            out.emplace_back(c, *hit);
            continue;
        }
        const LmScore score = scorer.score(make_request(c, corpus, example));
        out.emplace_back(c, score);
        fresh.emplace_back(std::move(key), score);
    }
    for (const auto& [key, score] : fresh) cache.insert(key, score);
    return out;
}

}  // namespace adapcr
