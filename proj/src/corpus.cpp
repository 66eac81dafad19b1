#include "adapcr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "adapcr/error.hpp"
#include "json.hpp"

namespace adapcr {

using json = nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open " + path.string());
    return in;
}

// Calls fn(line_number, object) for every non-blank JSONL line.
template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
        fn(line_no, obj);
    }
}

const json& require(const json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line_no, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line_no) {
    const json& v = require(obj, key, line_no);
    if (!v.is_string()) throw ParseError(line_no, std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
}

std::vector<std::string> require_strings(const json& obj, const char* key, std::size_t line_no) {
    const json& v = require(obj, key, line_no);
    if (!v.is_array()) throw ParseError(line_no, std::string("field \"") + key + "\" must be an array");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) throw ParseError(line_no, std::string("field \"") + key + "\" must hold strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

void Corpus::add(std::string id, std::string text) {
    if (by_id_.contains(id)) throw ConflictError(std::move(id));
    if (is_blank(text)) throw ContractError("passage " + id + " has empty text");
    const std::size_t tokens = tokenize(text).size();
    by_id_.emplace(id, passages_.size());
    passages_.push_back(Passage{std::move(id), std::move(text), tokens});
}

const Passage* Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(std::string_view id) const {
    if (const Passage* p = find(id)) return *p;
    throw LookupError("unknown passage id: " + std::string(id));
}

Corpus read_corpus(std::istream& in) {
    Corpus corpus;
    for_each_jsonl(in, [&](std::size_t line_no, const json& obj) {
        std::string id = require_string(obj, "id", line_no);
        std::string text = require_string(obj, "text", line_no);
        if (is_blank(text)) throw ParseError(line_no, "passage " + id + " has empty text");
        corpus.add(std::move(id), std::move(text));
    });
    return corpus;
}

Corpus ingest_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const Passage& p : corpus) out << json{{"id", p.id}, {"text", p.text}}.dump() << '\n';
}

std::vector<QAExample> read_dataset(std::istream& in) {
    std::vector<QAExample> dataset;
    for_each_jsonl(in, [&](std::size_t line_no, const json& obj) {
        QAExample ex;
        ex.question = require_string(obj, "question", line_no);
        ex.answers = require_strings(obj, "answers", line_no);
        if (ex.answers.empty()) throw ParseError(line_no, "answers must be non-empty");
        dataset.push_back(std::move(ex));
    });
    return dataset;
}

std::vector<QAExample> load_dataset(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<QAExample>& dataset) {
    for (const QAExample& ex : dataset) {
        out << json{{"question", ex.question}, {"answers", ex.answers}}.dump() << '\n';
    }
}

void read_subcorpus_cache(std::istream& in, std::vector<QAExample>& dataset, const Corpus& corpus) {
    for_each_jsonl(in, [&](std::size_t line_no, const json& obj) {
        const json& idx = require(obj, "question_idx", line_no);
        if (!idx.is_number_integer() || idx.get<long long>() < 0 ||
            static_cast<std::size_t>(idx.get<long long>()) >= dataset.size()) {
            throw ParseError(line_no, "question_idx out of range");
        }
        auto ids = require_strings(obj, "passage_ids", line_no);
        std::unordered_set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) throw ParseError(line_no, "duplicate passage id " + id);
            if (!corpus.contains(id)) throw ParseError(line_no, "unknown passage id " + id);
        }
        dataset[static_cast<std::size_t>(idx.get<long long>())].subcorpus_ids = std::move(ids);
    });
}

void load_subcorpus_cache(const std::filesystem::path& path, std::vector<QAExample>& dataset,
                          const Corpus& corpus) {
    auto in = open_input(path);
    read_subcorpus_cache(in, dataset, corpus);
}

void write_subcorpus_cache(std::ostream& out, const std::vector<QAExample>& dataset) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << json{{"question_idx", i}, {"passage_ids", dataset[i].subcorpus_ids}}.dump() << '\n';
    }
}

std::vector<Passage> resolve_subcorpus(const Corpus& corpus, const QAExample& example) {
    std::vector<Passage> out;
    out.reserve(example.subcorpus_ids.size());
    for (const auto& id : example.subcorpus_ids) out.push_back(corpus.at(id));
    return out;
}

// ---------------------------------------------------------------------------

Bm25Index::Bm25Index(const Corpus& corpus, Bm25Params params) : params_(params) {
    if (params_.k1 <= 0.0) throw ConfigError("bm25 k1 must be positive");
    if (params_.b < 0.0 || params_.b > 1.0) throw ConfigError("bm25 b must lie in [0, 1]");
    docs_.reserve(corpus.size());
    std::size_t total_length = 0;
    for (const Passage& p : corpus) {
        Doc doc;
        doc.id = p.id;
        for (auto& term : tokenize(p.text)) {
            ++doc.length;
            ++doc.term_counts[std::move(term)];
        }
        for (const auto& [term, count] : doc.term_counts) ++doc_frequencies_[term];
        total_length += doc.length;
        doc_index_.emplace(doc.id, docs_.size());
        docs_.push_back(std::move(doc));
    }
    if (!docs_.empty()) avg_doc_length_ = static_cast<double>(total_length) / static_cast<double>(docs_.size());
}

std::size_t Bm25Index::doc_frequency(std::string_view term) const {
    auto it = doc_frequencies_.find(std::string(term));
    return it == doc_frequencies_.end() ? 0 : it->second;
}

double Bm25Index::idf(std::string_view term) const {
    const double n = static_cast<double>(docs_.size());
    const double df = static_cast<double>(doc_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::size_t Bm25Index::doc_length(std::string_view passage_id) const {
    auto it = doc_index_.find(std::string(passage_id));
    if (it == doc_index_.end()) throw LookupError("passage not indexed: " + std::string(passage_id));
    return docs_[it->second].length;
}

double Bm25Index::score_doc(const std::vector<std::string>& query_terms, const Doc& doc) const {
    // All-empty documents leave avgdl at zero; the length ratio is then 1.
    const double length_ratio =
        avg_doc_length_ > 0.0 ? static_cast<double>(doc.length) / avg_doc_length_ : 1.0;
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * length_ratio);
    double total = 0.0;
    for (const auto& term : query_terms) {
        auto it = doc.term_counts.find(term);
        if (it == doc.term_counts.end()) continue;
        const double tf = static_cast<double>(it->second);
        total += idf(term) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

double Bm25Index::score(const std::vector<std::string>& query_terms, std::string_view passage_id) const {
    auto it = doc_index_.find(std::string(passage_id));
    if (it == doc_index_.end()) throw LookupError("passage not indexed: " + std::string(passage_id));
    return score_doc(query_terms, docs_[it->second]);
}

std::vector<std::string> Bm25Index::top(const std::vector<std::string>& query_terms, std::size_t limit) const {
    std::vector<std::pair<double, const std::string*>> scored;
    scored.reserve(docs_.size());
    for (const Doc& doc : docs_) scored.emplace_back(score_doc(query_terms, doc), &doc.id);
    const auto by_rank = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second < *b.second;
    };
    const std::size_t n = std::min(limit, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), by_rank);
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(*scored[i].second);
    return ids;
}

std::vector<std::string> preretrieve_subcorpus(const Bm25Index& index, std::string_view question,
                                               std::size_t limit) {
    return index.top(tokenize(question), limit);
}

void preretrieve_all(const Bm25Index& index, std::vector<QAExample>& dataset, std::size_t limit) {
    for (QAExample& ex : dataset) ex.subcorpus_ids = preretrieve_subcorpus(index, ex.question, limit);
}

}  // namespace adapcr
