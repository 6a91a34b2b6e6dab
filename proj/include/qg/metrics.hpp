#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qg/evaluator.hpp"
#include "qg/tensor.hpp"

namespace qg {

namespace detail {

template <typename Tok>
std::map<std::vector<Tok>, int> ngram_counts(const std::vector<Tok>& tokens, int n) {
    std::map<std::vector<Tok>, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        counts[std::vector<Tok>(tokens.begin() + i, tokens.begin() + i + n)] += 1;
    }
    return counts;
}

struct NgramTally {
    int64_t clipped = 0;
    int64_t total = 0;
};

template <typename Tok>
NgramTally modified_precision_counts(const std::vector<Tok>& candidate,
                                     const std::vector<Tok>& reference, int n) {
    NgramTally t;
    auto cand = ngram_counts(candidate, n);
    auto ref = ngram_counts(reference, n);
    for (const auto& [gram, count] : cand) {
        t.total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) t.clipped += std::min(count, it->second);
    }
    return t;
}

}  // namespace detail

// BLEU-4 with add-epsilon smoothing on zero numerators and brevity penalty
// min(1, exp(1 - |ref|/|cand|)). Empty candidate scores 0.
template <typename Tok>
double bleu_sentence_t(const std::vector<Tok>& candidate, const std::vector<Tok>& reference,
                       int max_n = 4) {
    if (reference.empty()) throw ContractError("bleu_sentence: empty reference");
    if (candidate.empty()) return 0.0;
    constexpr double kEps = 1e-9;
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        auto tally = detail::modified_precision_counts(candidate, reference, n);
        double num = tally.clipped > 0 ? static_cast<double>(tally.clipped) : kEps;
        double den = tally.total > 0 ? static_cast<double>(tally.total) : 1.0;
        log_sum += std::log(num / den);
    }
    double geo = std::exp(log_sum / max_n);
    double bp = candidate.size() >= reference.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(reference.size()) /
                                         static_cast<double>(candidate.size()));
    return geo * bp;
}

double bleu_sentence(const std::vector<int>& candidate, const std::vector<int>& reference,
                     int max_n = 4);
double bleu_sentence(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference, int max_n = 4);

// Corpus-level BLEU on the 0..100 scale: clipped counts and lengths are
// aggregated over the corpus, no smoothing (any zero n-gram precision makes
// the score 0).
double bleu_corpus(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references, int max_n = 4);

// Zero vectors score 0 by convention.
double cosine(const Tensor& u, const Tensor& v);

struct RewardBreakdown {
    double r1 = 0.0;       // BLEU component in [0,1]
    double r2 = 0.0;       // cosine component in [-1,1]
    double r_tilde = 0.0;  // alpha*r1 + (1-alpha)*r2
    double r = 0.0;        // (r_tilde + 1 - alpha) / (2 - alpha), in [0,1]
    double alpha = 0.0;
};

RewardBreakdown reward(double r1, double r2, double alpha);

// Greedy token-embedding matching: recall over reference tokens, precision
// over candidate tokens, harmonic mean (0 when either is <= 0).
double embedding_match_score(const std::vector<int>& candidate, const std::vector<int>& reference,
                             const EvaluatorModel& evaluator);

enum class QuestionClass { WhatWhich, WhyHow, Where, When, Who, HowMany, Other };

QuestionClass classify_question_type(const std::string& question);
const char* to_string(QuestionClass c);
const std::vector<QuestionClass>& all_question_classes();

}  // namespace qg
