#pragma once

#include <map>
#include <string>
#include <vector>

#include "qg/corpus.hpp"

namespace qg {

// Fixed special-token id layout; checkpoints depend on it.
enum SpecialId : int { PAD = 0, UNK = 1, CLS = 2, SEP = 3, BOS = 4, EOS = 5 };
constexpr int kNumSpecials = 6;
bool is_special_id(int id);

// Lowercases and splits on whitespace with punctuation detached as
// single-character tokens. Bytes >= 0x80 are treated as word characters so
// UTF-8 sequences stay inside one token.
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
public:
    // Words with frequency >= min_freq; if more than max_size - 6 qualify,
    // the most frequent are kept with ties broken lexicographically.
    static Vocab build(const std::vector<std::string>& texts, int min_freq, int max_size,
                       bool* empty_corpus_warning = nullptr);
    static Vocab build(const std::vector<QaTriple>& triples, int min_freq, int max_size,
                       bool* empty_corpus_warning = nullptr);

    int size() const { return static_cast<int>(words_.size()); }
    int id(const std::string& word) const;  // UNK when absent
    const std::string& word(int id) const;  // throws on out-of-range
    bool contains(const std::string& word) const;

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    // One "word<TAB>id" line per entry, specials first, sorted by id.
    std::string to_tsv() const;
    static Vocab from_tsv(const std::string& text);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    std::vector<std::string> word_list() const { return words_; }
    static Vocab from_word_list(const std::vector<std::string>& words);

private:
    Vocab() = default;
    std::vector<std::string> words_;
    std::map<std::string, int> ids_;
};

struct TokenSeq {
    enum class Kind { Source, Target };
    std::vector<int> ids;
    Kind kind = Kind::Source;

    // Source: starts with CLS, exactly two SEPs, PAD only trailing.
    // Target: starts with BOS, exactly one EOS, PAD only after it.
    void validate(int vocab_size) const;
};

// [CLS] context [SEP] answer [SEP]; context is right-truncated to fit
// max_len, the answer never is.
TokenSeq assemble_input(const std::vector<int>& context_ids, const std::vector<int>& answer_ids,
                        int max_len);

// [BOS] question [EOS]; question right-truncated to fit max_len.
TokenSeq assemble_target(const std::vector<int>& question_ids, int max_len);

}  // namespace qg
