#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qg {

// One (context, answer, question) example.
struct QaTriple {
    std::string context;
    std::string answer;
    std::string question;
    std::optional<int> answer_start;  // character offset into context
    std::string id;

    // Non-empty fields after trimming; answer_start, when set, must point at
    // the answer text inside the context.
    void validate() const;
};

struct LoadWarnings {
    int skipped_no_answers = 0;
    int cleared_answer_offsets = 0;
};

// Reads a SQuAD v1.1 JSON file: one triple per (question, first answer) pair,
// in document order. An answer_start that does not point at the answer text
// is cleared and counted in warnings. answer_start == -1 means "absent".
std::vector<QaTriple> load_squad(const std::string& path, LoadWarnings* warnings = nullptr);

// Writes triples back out in the SQuAD v1.1 schema (one paragraph per triple).
// Absent answer_start is stored as -1.
void save_squad(const std::vector<QaTriple>& triples, const std::string& path,
                const std::string& title = "corpus");
std::string squad_json_string(const std::vector<QaTriple>& triples,
                              const std::string& title = "corpus");

// Seeded shuffle, then cut: dev gets floor(dev_fraction * N) items, but at
// least 1 when N >= 2.
std::pair<std::vector<QaTriple>, std::vector<QaTriple>> split_train_dev(
    const std::vector<QaTriple>& triples, double dev_fraction, uint64_t seed);

// Template-generated triples covering the six WH question classes in a
// round-robin, so class frequencies stay near uniform.
std::vector<QaTriple> generate_synthetic(int n, uint64_t seed);

}  // namespace qg
