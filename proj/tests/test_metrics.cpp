#include <doctest.h>

#include <cmath>
#include <map>

#include "qg/corpus.hpp"
#include "qg/metrics.hpp"

using namespace qg;

namespace {

// ---- independent brute-force BLEU oracle ----------------------------------
// Counts n-gram occurrences by direct subsequence scanning; shares no code
// with the implementation under test.

int count_occurrences(const std::vector<int>& seq, const std::vector<int>& gram) {
    if (gram.empty() || seq.size() < gram.size()) return 0;
    int count = 0;
    for (size_t i = 0; i + gram.size() <= seq.size(); ++i) {
        bool match = true;
        for (size_t j = 0; j < gram.size(); ++j) {
            if (seq[i + j] != gram[j]) {
                match = false;
                break;
            }
        }
        if (match) ++count;
    }
    return count;
}

double oracle_modified_precision(const std::vector<int>& cand, const std::vector<int>& ref, int n,
                                 int64_t* clipped_out = nullptr, int64_t* total_out = nullptr) {
    int64_t total = static_cast<int64_t>(cand.size()) >= n
                        ? static_cast<int64_t>(cand.size()) - n + 1
                        : 0;
    int64_t clipped = 0;
    std::map<std::vector<int>, bool> seen;
    for (size_t i = 0; i + n <= cand.size(); ++i) {
        std::vector<int> gram(cand.begin() + i, cand.begin() + i + n);
        if (seen.count(gram)) continue;
        seen[gram] = true;
        clipped += std::min(count_occurrences(cand, gram), count_occurrences(ref, gram));
    }
    if (clipped_out) *clipped_out = clipped;
    if (total_out) *total_out = total;
    double num = clipped > 0 ? static_cast<double>(clipped) : 1e-9;
    double den = total > 0 ? static_cast<double>(total) : 1.0;
    return num / den;
}

double oracle_bleu(const std::vector<int>& cand, const std::vector<int>& ref) {
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) log_sum += std::log(oracle_modified_precision(cand, ref, n));
    double geo = std::exp(log_sum / 4.0);
    double bp = cand.size() >= ref.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref.size()) /
                                         static_cast<double>(cand.size()));
    return geo * bp;
}

std::vector<int> random_tokens(Rng& rng, int len, int vocab) {
    std::vector<int> v(static_cast<size_t>(len));
    for (auto& x : v) x = static_cast<int>(rng.index(static_cast<size_t>(vocab)));
    return v;
}

}  // namespace

TEST_CASE("bleu of a sentence against itself is 1") {
    std::vector<int> s = {3, 1, 4, 1, 5};
    CHECK(bleu_sentence(s, s) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu with zero unigram overlap is below 1e-6") {
    std::vector<int> cand = {1, 2, 3, 4, 5};
    std::vector<int> ref = {6, 7, 8, 9, 10};
    CHECK(bleu_sentence(cand, ref) < 1e-6);
}

TEST_CASE("the clipped-precision example: seven 'the' against 'the cat is on the mat'") {
    // token 0 = "the", rest arbitrary distinct ids
    std::vector<int> cand(7, 0);
    std::vector<int> ref = {0, 1, 2, 3, 0, 4};
    int64_t clipped = 0, total = 0;
    oracle_modified_precision(cand, ref, 1, &clipped, &total);
    CHECK(clipped == 2);
    CHECK(total == 7);
    CHECK(bleu_sentence(cand, ref) == doctest::Approx(oracle_bleu(cand, ref)).epsilon(1e-9));
}

TEST_CASE("bleu_sentence agrees with the brute-force oracle on random pairs") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        int lc = 1 + static_cast<int>(rng.index(20));
        int lr = 1 + static_cast<int>(rng.index(20));
        auto cand = random_tokens(rng, lc, 10);
        auto ref = random_tokens(rng, lr, 10);
        double got = bleu_sentence(cand, ref);
        double want = oracle_bleu(cand, ref);
        CHECK(std::abs(got - want) < 1e-9);
    }
}

TEST_CASE("bleu is invariant to vocabulary relabeling") {
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        auto cand = random_tokens(rng, 8, 6);
        auto ref = random_tokens(rng, 9, 6);
        auto relabel = [](const std::vector<int>& v) {
            std::vector<int> out = v;
            for (auto& x : out) x = 1000 - 7 * x;  // injective map
            return out;
        };
        CHECK(bleu_sentence(cand, ref) ==
              doctest::Approx(bleu_sentence(relabel(cand), relabel(ref))).epsilon(1e-12));
    }
}

TEST_CASE("empty candidate scores zero, empty reference is an error") {
    std::vector<int> ref = {1, 2, 3};
    CHECK(bleu_sentence({}, ref) == 0.0);
    CHECK_THROWS_AS(bleu_sentence(ref, {}), ContractError);
}

TEST_CASE("corpus bleu is 100 for identical corpora") {
    std::vector<std::vector<int>> refs = {{1, 2, 3, 4, 5}, {9, 8, 7, 6, 5, 4}};
    CHECK(bleu_corpus(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("single-pair corpus bleu equals 100x sentence bleu when all counts are positive") {
    std::vector<int> cand = {1, 2, 3, 4, 5, 6};
    std::vector<int> ref = {1, 2, 3, 4, 7, 6};
    CHECK(bleu_corpus({cand}, {ref}) ==
          doctest::Approx(100.0 * bleu_sentence(cand, ref)).epsilon(1e-9));
}

TEST_CASE("appending an identical pair never decreases corpus bleu") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<int>> cands, refs;
        int pairs = 1 + static_cast<int>(rng.index(4));
        for (int p = 0; p < pairs; ++p) {
            cands.push_back(random_tokens(rng, 3 + static_cast<int>(rng.index(8)), 8));
            refs.push_back(random_tokens(rng, 3 + static_cast<int>(rng.index(8)), 8));
        }
        double before = bleu_corpus(cands, refs);
        auto extra = random_tokens(rng, 6, 8);
        cands.push_back(extra);
        refs.push_back(extra);
        double after = bleu_corpus(cands, refs);
        CHECK(after >= before - 1e-12);
    }
}

TEST_CASE("corpus bleu rejects mismatched lengths") {
    CHECK_THROWS_AS(bleu_corpus({{1}}, {{1}, {2}}), ContractError);
}

TEST_CASE("cosine basics") {
    Tensor u = Tensor::from({3}, {1.0, 2.0, -0.5});
    CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor x = Tensor::from({2}, {1.0, 0.0});
    Tensor y = Tensor::from({2}, {0.0, 1.0});
    CHECK(cosine(x, y) == doctest::Approx(0.0));
    Tensor neg = Tensor::from({3}, {-1.0, -2.0, 0.5});
    CHECK(cosine(u, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    Tensor zero = Tensor::zeros({3});
    CHECK(cosine(u, zero) == 0.0);
    Tensor wide = Tensor::zeros({4});
    CHECK_THROWS_AS(cosine(u, wide), ContractError);
}

TEST_CASE("reward anchors from the blending formula") {
    CHECK(reward(1.0, 1.0, 0.197).r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(reward(0.0, -1.0, 0.197).r == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(reward(0.0, -1.0, 0.7).r == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(reward(0.5, 0.0, 0.3).r == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(reward(0.5, 0.0, 0.9).r == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(reward(1.0, 0.0, 0.197).r == doctest::Approx(1.0 / 1.803).epsilon(1e-12));
}

TEST_CASE("reward breakdown satisfies its identities exactly") {
    Rng rng(44);
    for (int trial = 0; trial < 2000; ++trial) {
        double r1 = rng.uniform();
        double r2 = rng.uniform(-1.0, 1.0);
        double alpha = rng.uniform(0.0500001, 1.0);
        RewardBreakdown b = reward(r1, r2, alpha);
        CHECK(b.r_tilde == alpha * r1 + (1.0 - alpha) * r2);
        CHECK(b.r == (b.r_tilde + 1.0 - alpha) / (2.0 - alpha));
        CHECK(b.r >= 0.0);
        CHECK(b.r <= 1.0);
        CHECK(1.0 - b.r >= 0.0);
        CHECK(1.0 - b.r <= 1.0);
    }
}

TEST_CASE("reward is monotone in r1 and r2") {
    Rng rng(45);
    for (int trial = 0; trial < 500; ++trial) {
        double r1 = rng.uniform();
        double r2 = rng.uniform(-1.0, 1.0);
        double alpha = rng.uniform(0.0500001, 1.0);
        double bump1 = rng.uniform(0.0, 1.0 - r1);
        double bump2 = rng.uniform(0.0, 1.0 - r2);
        CHECK(reward(r1 + bump1, r2, alpha).r >= reward(r1, r2, alpha).r);
        CHECK(reward(r1, r2 + bump2, alpha).r >= reward(r1, r2, alpha).r);
    }
}

TEST_CASE("reward validates ranges") {
    CHECK_THROWS_AS(reward(1.2, 0.0, 0.5), ContractError);
    CHECK_THROWS_AS(reward(0.5, -1.5, 0.5), ContractError);
    CHECK_THROWS_AS(reward(0.5, 0.0, 0.05), ContractError);
    CHECK_THROWS_AS(reward(0.5, 0.0, 1.0001), ContractError);
}

namespace {

EvaluatorModel frozen_random_evaluator(const Vocab& vocab) {
    EvaluatorConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 32;
    cfg.max_len = 48;
    cfg.vocab_size = vocab.size();
    cfg.seed = 77;
    EvaluatorModel m = EvaluatorModel::init(cfg);
    m.freeze();
    return m;
}

}  // namespace

TEST_CASE("embedding match score is 1 for identical inputs and symmetric") {
    auto triples = generate_synthetic(30, 3);
    Vocab vocab = Vocab::build(triples, 1, 2000);
    EvaluatorModel ev = frozen_random_evaluator(vocab);
    std::vector<int> a = vocab.encode("where was alice born ?");
    std::vector<int> b = vocab.encode("alice wrote the storm .");
    CHECK(embedding_match_score(a, a, ev) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(embedding_match_score(a, b, ev) ==
          doctest::Approx(embedding_match_score(b, a, ev)).epsilon(1e-12));
    CHECK_THROWS_AS(embedding_match_score({}, a, ev), ContractError);
}

TEST_CASE("matched pairs outscore mismatched pairs on the synthetic corpus") {
    auto triples = generate_synthetic(40, 9);
    Vocab vocab = Vocab::build(triples, 1, 4000);
    EvaluatorModel ev = frozen_random_evaluator(vocab);
    double matched = 0.0, mismatched = 0.0;
    int n = 20;
    for (int i = 0; i < n; ++i) {
        std::vector<int> q = vocab.encode(triples[static_cast<size_t>(i)].question);
        std::vector<int> other =
            vocab.encode(triples[static_cast<size_t>(i + n)].question);
        matched += embedding_match_score(q, q, ev);
        mismatched += embedding_match_score(q, other, ev);
    }
    CHECK(matched / n > mismatched / n);
}

TEST_CASE("embedding match score requires a frozen evaluator") {
    auto triples = generate_synthetic(10, 4);
    Vocab vocab = Vocab::build(triples, 1, 1000);
    EvaluatorConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 32;
    cfg.vocab_size = vocab.size();
    EvaluatorModel m = EvaluatorModel::init(cfg);
    std::vector<int> a = vocab.encode("who was born in rome ?");
    CHECK_THROWS_AS(embedding_match_score(a, a, m), ContractError);
}

TEST_CASE("question classification rules") {
    CHECK(classify_question_type("When did the war end ?") == QuestionClass::When);
    CHECK(classify_question_type("How many states are there ?") == QuestionClass::HowMany);
    CHECK(classify_question_type("How much water ?") == QuestionClass::HowMany);
    CHECK(classify_question_type("How did he die ?") == QuestionClass::WhyHow);
    CHECK(classify_question_type("Why did he leave ?") == QuestionClass::WhyHow);
    CHECK(classify_question_type("What is this ?") == QuestionClass::WhatWhich);
    CHECK(classify_question_type("Which book ?") == QuestionClass::WhatWhich);
    CHECK(classify_question_type("Where was she born ?") == QuestionClass::Where);
    CHECK(classify_question_type("Who won ?") == QuestionClass::Who);
    CHECK(classify_question_type("Whose car is that ?") == QuestionClass::Who);
    CHECK(classify_question_type("Name the capital .") == QuestionClass::Other);
    CHECK(classify_question_type("") == QuestionClass::Other);
    CHECK(classify_question_type("how") == QuestionClass::WhyHow);
}
