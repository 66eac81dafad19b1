#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adapcr {

struct Passage {
    std::string id;
    std::string text;
    std::size_t token_count = 0;
};

/// Lowercases, strips punctuation (ASCII and common Unicode punctuation
/// blocks) and splits on whitespace. Deterministic and idempotent.
std::vector<std::string> tokenize(std::string_view text);

/// Passages indexed by id, kept in file order.
class Corpus {
public:
    Corpus() = default;

    /// Adds a passage. Throws ConflictError on a repeated id and
    /// ContractError when the text is blank.
    void add(std::string id, std::string text);

    const Passage& at(std::string_view id) const;
    const Passage* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }

    std::size_t size() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }
    const std::vector<Passage>& passages() const noexcept { return passages_; }

    auto begin() const noexcept { return passages_.begin(); }
    auto end() const noexcept { return passages_.end(); }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// JSONL, one {"id", "text"} object per line. Blank lines are skipped.
Corpus read_corpus(std::istream& in);
Corpus ingest_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);

struct QAExample {
    std::string question;
    std::vector<std::string> answers;
    std::vector<std::string> subcorpus_ids;
};

/// JSONL, one {"question", "answers": [...]} object per line.
std::vector<QAExample> read_dataset(std::istream& in);
std::vector<QAExample> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<QAExample>& dataset);

/// Sub-corpus cache: {"question_idx", "passage_ids"} per line.
/// Fills QAExample::subcorpus_ids and checks every id resolves in the corpus.
void read_subcorpus_cache(std::istream& in, std::vector<QAExample>& dataset, const Corpus& corpus);
void load_subcorpus_cache(const std::filesystem::path& path, std::vector<QAExample>& dataset,
                          const Corpus& corpus);
void write_subcorpus_cache(std::ostream& out, const std::vector<QAExample>& dataset);

/// Resolves an example's sub-corpus ids into passages (in cached order).
std::vector<Passage> resolve_subcorpus(const Corpus& corpus, const QAExample& example);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// Okapi BM25 over an in-memory corpus. Immutable after construction.
class Bm25Index {
public:
    explicit Bm25Index(const Corpus& corpus, Bm25Params params = {});

    double score(const std::vector<std::string>& query_terms, std::string_view passage_id) const;

    /// Top `limit` passage ids by descending score, ties by ascending id.
    std::vector<std::string> top(const std::vector<std::string>& query_terms, std::size_t limit) const;

    double idf(std::string_view term) const;
    std::size_t doc_frequency(std::string_view term) const;
    std::size_t doc_length(std::string_view passage_id) const;

    std::size_t total_docs() const noexcept { return docs_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const Bm25Params& params() const noexcept { return params_; }

private:
    struct Doc {
        std::string id;
        std::size_t length = 0;
        std::unordered_map<std::string, std::size_t> term_counts;
    };

    double score_doc(const std::vector<std::string>& query_terms, const Doc& doc) const;

    Bm25Params params_;
    std::vector<Doc> docs_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::unordered_map<std::string, std::size_t> doc_frequencies_;
    double avg_doc_length_ = 0.0;
};

/// BM25 top-`limit` over the tokenized question.
std::vector<std::string> preretrieve_subcorpus(const Bm25Index& index, std::string_view question,
                                               std::size_t limit = 100);

/// Runs pre-retrieval for every example, filling subcorpus_ids.
void preretrieve_all(const Bm25Index& index, std::vector<QAExample>& dataset, std::size_t limit = 100);

}  // namespace adapcr
