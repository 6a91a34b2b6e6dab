#include "qg/metrics.hpp"

#include <cmath>

#include "qg/vocab.hpp"

namespace qg {

double bleu_sentence(const std::vector<int>& candidate, const std::vector<int>& reference,
                     int max_n) {
    return bleu_sentence_t(candidate, reference, max_n);
}

double bleu_sentence(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference, int max_n) {
    return bleu_sentence_t(candidate, reference, max_n);
}

double bleu_corpus(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references, int max_n) {
    if (candidates.size() != references.size()) {
        throw ContractError("bleu_corpus: " + std::to_string(candidates.size()) +
                            " candidates vs " + std::to_string(references.size()) + " references");
    }
    if (candidates.empty()) throw ContractError("bleu_corpus: empty corpus");
    std::vector<int64_t> clipped(static_cast<size_t>(max_n), 0);
    std::vector<int64_t> totals(static_cast<size_t>(max_n), 0);
    int64_t cand_len = 0, ref_len = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (references[i].empty()) throw ContractError("bleu_corpus: empty reference");
        cand_len += static_cast<int64_t>(candidates[i].size());
        ref_len += static_cast<int64_t>(references[i].size());
        for (int n = 1; n <= max_n; ++n) {
            auto tally = detail::modified_precision_counts(candidates[i], references[i], n);
            clipped[static_cast<size_t>(n - 1)] += tally.clipped;
            totals[static_cast<size_t>(n - 1)] += tally.total;
        }
    }
    if (cand_len == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < max_n; ++n) {
        if (clipped[static_cast<size_t>(n)] == 0 || totals[static_cast<size_t>(n)] == 0) {
            return 0.0;
        }
        log_sum += std::log(static_cast<double>(clipped[static_cast<size_t>(n)]) /
                            static_cast<double>(totals[static_cast<size_t>(n)]));
    }
    double geo = std::exp(log_sum / max_n);
    double bp = cand_len >= ref_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return 100.0 * geo * bp;
}

double cosine(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v) || u.rank() != 1) {
        throw ContractError("cosine: width mismatch " + u.shape_str() + " vs " + v.shape_str());
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int64_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

RewardBreakdown reward(double r1, double r2, double alpha) {
    if (!(r1 >= 0.0 && r1 <= 1.0)) {
        throw ContractError("reward: r1 = " + std::to_string(r1) + " outside [0,1]");
    }
    if (!(r2 >= -1.0 && r2 <= 1.0)) {
        throw ContractError("reward: r2 = " + std::to_string(r2) + " outside [-1,1]");
    }
    if (!(alpha > 0.05 && alpha <= 1.0)) {
        throw ContractError("reward: alpha = " + std::to_string(alpha) + " outside (0.05,1]");
    }
    RewardBreakdown b;
    b.r1 = r1;
    b.r2 = r2;
    b.alpha = alpha;
    b.r_tilde = alpha * r1 + (1.0 - alpha) * r2;
    b.r = (b.r_tilde + 1.0 - alpha) / (2.0 - alpha);
    // fp guard: the affine map can land one ulp outside [0,1] at the corners
    if (b.r < 0.0) b.r = 0.0;
    if (b.r > 1.0) b.r = 1.0;
    return b;
}

double embedding_match_score(const std::vector<int>& candidate, const std::vector<int>& reference,
                             const EvaluatorModel& evaluator) {
    if (candidate.empty() || reference.empty()) {
        throw ContractError("embedding_match_score: empty side");
    }
    if (!evaluator.frozen()) {
        throw ContractError("embedding_match_score: evaluator must be frozen");
    }
    Tensor ce = evaluator.token_embeddings(candidate);
    Tensor re = evaluator.token_embeddings(reference);
    const int nc = ce.dim(0), nr = re.dim(0), d = ce.dim(1);

    auto row_cos = [&](const Tensor& a, int i, const Tensor& b, int j) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int k = 0; k < d; ++k) {
            dot += a.at(i, k) * b.at(j, k);
            na += a.at(i, k) * a.at(i, k);
            nb += b.at(j, k) * b.at(j, k);
        }
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double recall = 0.0;
    for (int j = 0; j < nr; ++j) {
        double best = -1.0;
        for (int i = 0; i < nc; ++i) best = std::max(best, row_cos(ce, i, re, j));
        recall += best;
    }
    recall /= nr;
    double precision = 0.0;
    for (int i = 0; i < nc; ++i) {
        double best = -1.0;
        for (int j = 0; j < nr; ++j) best = std::max(best, row_cos(ce, i, re, j));
        precision += best;
    }
    precision /= nc;
    if (precision <= 0.0 || recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

QuestionClass classify_question_type(const std::string& question) {
    std::vector<std::string> toks = tokenize(question);
    if (toks.empty()) return QuestionClass::Other;
    const std::string& first = toks[0];
    const std::string second = toks.size() > 1 ? toks[1] : "";
    if (first == "how" && (second == "many" || second == "much")) return QuestionClass::HowMany;
    if (first == "what" || first == "which") return QuestionClass::WhatWhich;
    if (first == "why" || first == "how") return QuestionClass::WhyHow;
    if (first == "where") return QuestionClass::Where;
    if (first == "when") return QuestionClass::When;
    if (first == "who" || first == "whom" || first == "whose") return QuestionClass::Who;
    return QuestionClass::Other;
}

const char* to_string(QuestionClass c) {
    switch (c) {
        case QuestionClass::WhatWhich: return "WhatWhich";
        case QuestionClass::WhyHow: return "WhyHow";
        case QuestionClass::Where: return "Where";
        case QuestionClass::When: return "When";
        case QuestionClass::Who: return "Who";
        case QuestionClass::HowMany: return "HowMany";
        default: return "Other";
    }
}

const std::vector<QuestionClass>& all_question_classes() {
    static const std::vector<QuestionClass> classes = {
        QuestionClass::WhatWhich, QuestionClass::WhyHow, QuestionClass::Where,
        QuestionClass::When,      QuestionClass::Who,    QuestionClass::HowMany,
        QuestionClass::Other};
    return classes;
}

}  // namespace qg
