#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adapcr/corpus.hpp"

namespace adapcr {

enum class FixtureKind { SingleHop, Redundant, TwoHop };

const char* to_string(FixtureKind kind) noexcept;
FixtureKind parse_fixture_kind(std::string_view name);

struct FixtureSpec {
    FixtureKind kind = FixtureKind::TwoHop;
    std::size_t n_questions = 10;
    std::size_t corpus_size = 50;
    std::size_t vocab_size = 2000;
    std::uint64_t seed = 0;
    /// Share of questions whose answer is planted nowhere in the corpus.
    double absent_answer_fraction = 0.0;
    /// Geometry used by the two_hop self-check.
    std::size_t embed_dim = 256;
    std::size_t k = 5;
    std::size_t subcorpus_limit = 100;
    std::size_t max_attempts = 100;
    /// Minimum score gap the two_hop self-check demands around the plant.
    double margin = 0.02;

    void validate() const;
};

/// question index -> planted gold passage ids (1 or 2).
using PlantedTruth = std::map<std::size_t, std::vector<std::string>>;

struct FixtureStats {
    std::size_t verified = 0;       // two_hop questions passing the self-check
    std::size_t resampled = 0;      // question re-draws performed
    std::size_t rounds = 0;
};

struct Fixture {
    Corpus corpus;
    std::vector<QAExample> dataset;
    PlantedTruth truth;
    std::vector<bool> answer_present;  // per question
    FixtureStats stats;
};

/// Seeded synthetic corpus + questions with planted structure.
///
/// two_hop: the question shares tokens with passage A; passage B carries
/// the answer and shares bridge tokens with A but only one topic token with
/// the question, so B ranks outside the first-stage top-k while A ⊕ question
/// retrieves it. Shared distractors each hold (topic, q1) tokens of several
/// questions and outrank B on the question alone. Every two_hop question is
/// checked against the real retriever and re-drawn (up to max_attempts
/// rounds) until B misses the first stage and the pair ⟨A, B⟩ wins.
///
/// single_hop: one gold passage holds the question tokens and the answer.
/// redundant: the gold passage plus two near-duplicates without the answer.
Fixture generate_fixture(const FixtureSpec& spec);

/// Two-hop self-check for one question (identity head, hash embedder).
bool two_hop_plant_holds(const Fixture& fixture, std::size_t question_idx, const FixtureSpec& spec);

void write_truth(std::ostream& out, const PlantedTruth& truth);
PlantedTruth read_truth(std::istream& in);
PlantedTruth load_truth(const std::filesystem::path& path);

/// Writes corpus.jsonl, dataset.jsonl and truth.jsonl into `dir`.
void write_fixture(const std::filesystem::path& dir, const Fixture& fixture);

}  // namespace adapcr
