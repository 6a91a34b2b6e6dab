#include "qg/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "qg/common.hpp"

namespace qg {

namespace {

const std::vector<std::string> kSpecialNames = {"[PAD]", "[UNK]", "[CLS]",
                                                "[SEP]", "[BOS]", "[EOS]"};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

bool is_special_id(int id) { return id >= 0 && id < kNumSpecials; }

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            out.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocab Vocab::build(const std::vector<std::string>& texts, int min_freq, int max_size,
                   bool* empty_corpus_warning) {
    if (min_freq < 1) throw ContractError("build_vocab: min_freq must be >= 1");
    if (max_size < kNumSpecials + 1) throw ContractError("build_vocab: max_size must be >= 7");
    std::map<std::string, int64_t> freq;
    for (const auto& text : texts) {
        for (const auto& tok : tokenize(text)) freq[tok] += 1;
    }
    std::vector<std::pair<std::string, int64_t>> qualified;
    for (const auto& [word, count] : freq) {
        if (count >= min_freq) qualified.emplace_back(word, count);
    }
    std::sort(qualified.begin(), qualified.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    size_t keep = static_cast<size_t>(max_size - kNumSpecials);
    if (qualified.size() > keep) qualified.resize(keep);

    if (empty_corpus_warning) *empty_corpus_warning = qualified.empty();

    Vocab v;
    v.words_ = kSpecialNames;
    for (const auto& [word, count] : qualified) v.words_.push_back(word);
    for (size_t i = 0; i < v.words_.size(); ++i) v.ids_[v.words_[i]] = static_cast<int>(i);
    return v;
}

Vocab Vocab::build(const std::vector<QaTriple>& triples, int min_freq, int max_size,
                   bool* empty_corpus_warning) {
    std::vector<std::string> texts;
    texts.reserve(triples.size() * 3);
    for (const auto& t : triples) {
        texts.push_back(t.context);
        texts.push_back(t.answer);
        texts.push_back(t.question);
    }
    return build(texts, min_freq, max_size, empty_corpus_warning);
}

int Vocab::id(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? UNK : it->second;
}

const std::string& Vocab::word(int id) const {
    if (id < 0 || id >= size()) {
        throw ContractError("vocab: id " + std::to_string(id) + " out of range [0," +
                            std::to_string(size()) + ")");
    }
    return words_[static_cast<size_t>(id)];
}

bool Vocab::contains(const std::string& w) const { return ids_.count(w) > 0; }

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& tok : tokenize(text)) out.push_back(id(tok));
    return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        const std::string& w = word(i);  // validates range
        if (is_special_id(i) && i != UNK) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::string Vocab::to_tsv() const {
    std::ostringstream ss;
    for (size_t i = 0; i < words_.size(); ++i) ss << words_[i] << '\t' << i << '\n';
    return ss.str();
}

Vocab Vocab::from_tsv(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw InputError("vocab file: missing tab in line: " + line);
        std::string word = line.substr(0, tab);
        int id = std::stoi(line.substr(tab + 1));
        if (id != static_cast<int>(words.size())) {
            throw InputError("vocab file: ids must be dense and sorted, got " + line);
        }
        words.push_back(word);
    }
    return from_word_list(words);
}

Vocab Vocab::from_word_list(const std::vector<std::string>& words) {
    if (static_cast<int>(words.size()) < kNumSpecials) {
        throw InputError("vocab: fewer entries than the 6 specials");
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        if (words[static_cast<size_t>(i)] != kSpecialNames[static_cast<size_t>(i)]) {
            throw InputError("vocab: specials must occupy ids 0-5 in fixed order");
        }
    }
    Vocab v;
    v.words_ = words;
    for (size_t i = 0; i < words.size(); ++i) {
        if (v.ids_.count(words[i])) throw InputError("vocab: duplicate word " + words[i]);
        v.ids_[words[i]] = static_cast<int>(i);
    }
    return v;
}

void Vocab::save(const std::string& path) const { atomic_write_file(path, to_tsv()); }

Vocab Vocab::load(const std::string& path) { return from_tsv(read_text_file(path)); }

void TokenSeq::validate(int vocab_size) const {
    for (int id : ids) {
        if (id < 0 || id >= vocab_size) {
            throw ContractError("TokenSeq: id " + std::to_string(id) + " out of range");
        }
    }
    if (kind == Kind::Source) {
        if (ids.empty() || ids[0] != CLS) throw ContractError("source sequence must start with CLS");
        int seps = 0;
        bool in_pad_tail = false;
        for (size_t i = 1; i < ids.size(); ++i) {
            if (ids[i] == SEP) ++seps;
            if (ids[i] == PAD) in_pad_tail = true;
            if (in_pad_tail && ids[i] != PAD) {
                throw ContractError("source sequence: PAD must be a trailing run");
            }
        }
        if (seps != 2) throw ContractError("source sequence must contain exactly two SEP tokens");
    } else {
        if (ids.empty() || ids[0] != BOS) throw ContractError("target sequence must start with BOS");
        int eos_pos = -1;
        for (size_t i = 1; i < ids.size(); ++i) {
            if (ids[i] == EOS) {
                if (eos_pos >= 0) throw ContractError("target sequence: multiple EOS");
                eos_pos = static_cast<int>(i);
            } else if (eos_pos >= 0 && ids[i] != PAD) {
                throw ContractError("target sequence: only PAD may follow EOS");
            }
        }
        if (eos_pos < 0) throw ContractError("target sequence must end with EOS");
    }
}

TokenSeq assemble_input(const std::vector<int>& context_ids, const std::vector<int>& answer_ids,
                        int max_len) {
    if (answer_ids.empty()) throw ContractError("assemble_input: answer must be non-empty");
    const int overhead = 3;  // CLS + 2 SEP
    int budget = max_len - overhead - static_cast<int>(answer_ids.size());
    if (budget < 0) {
        throw ContractError("assemble_input: answer of " + std::to_string(answer_ids.size()) +
                            " tokens cannot fit max_len " + std::to_string(max_len));
    }
    int ctx_len = std::min<int>(static_cast<int>(context_ids.size()), budget);
    TokenSeq seq;
    seq.kind = TokenSeq::Kind::Source;
    seq.ids.reserve(static_cast<size_t>(overhead + ctx_len + answer_ids.size()));
    seq.ids.push_back(CLS);
    seq.ids.insert(seq.ids.end(), context_ids.begin(), context_ids.begin() + ctx_len);
    seq.ids.push_back(SEP);
    seq.ids.insert(seq.ids.end(), answer_ids.begin(), answer_ids.end());
    seq.ids.push_back(SEP);
    return seq;
}

TokenSeq assemble_target(const std::vector<int>& question_ids, int max_len) {
    if (question_ids.empty()) throw ContractError("assemble_target: question must be non-empty");
    if (max_len < 3) throw ContractError("assemble_target: max_len must be >= 3");
    int keep = std::min<int>(static_cast<int>(question_ids.size()), max_len - 2);
    TokenSeq seq;
    seq.kind = TokenSeq::Kind::Target;
    seq.ids.reserve(static_cast<size_t>(keep + 2));
    seq.ids.push_back(BOS);
    seq.ids.insert(seq.ids.end(), question_ids.begin(), question_ids.begin() + keep);
    seq.ids.push_back(EOS);
    return seq;
}

}  // namespace qg
