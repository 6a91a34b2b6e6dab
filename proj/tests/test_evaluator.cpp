#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qg/corpus.hpp"
#include "qg/evaluator.hpp"
#include "qg/metrics.hpp"
#include "qg/training.hpp"

using namespace qg;

namespace {

EvaluatorConfig small_eval_config(int vocab_size, uint64_t seed = 4, int d_model = 16) {
    EvaluatorConfig cfg;
    cfg.d_model = d_model;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 2 * d_model;
    cfg.max_len = 48;
    cfg.vocab_size = vocab_size;
    cfg.seed = seed;
    return cfg;
}

struct SmallCorpus {
    Vocab vocab;
    std::vector<TokenSeq> seqs;
};

SmallCorpus synthetic_corpus(int n, uint64_t seed) {
    auto triples = generate_synthetic(n, seed);
    SmallCorpus sc{Vocab::build(triples, 1, 2000), {}};
    for (const auto& t : triples) {
        std::vector<int> ctx = sc.vocab.encode(t.context);
        std::vector<int> ans = sc.vocab.encode(t.answer);
        std::vector<int> q = sc.vocab.encode(t.question);
        sc.seqs.push_back(assemble_input(ctx, ans, 48));
        sc.seqs.push_back(assemble_target(q, 16));
    }
    return sc;
}

std::vector<double> flat_unigram(int vocab_size) {
    std::vector<double> dist(static_cast<size_t>(vocab_size), 0.0);
    int regular = vocab_size - kNumSpecials;
    for (int i = kNumSpecials; i < vocab_size; ++i) {
        dist[static_cast<size_t>(i)] = 1.0 / regular;
    }
    return dist;
}

}  // namespace

TEST_CASE("corrupt_for_rtd with rate 0 is the identity") {
    Rng rng(1);
    std::vector<int> ids = {CLS, 7, 8, 9, SEP};
    auto out = corrupt_for_rtd(ids, 0.0, flat_unigram(20), rng);
    CHECK(out.corrupted_ids == ids);
    for (bool l : out.labels) CHECK_FALSE(l);
}

TEST_CASE("corrupt_for_rtd never touches special positions") {
    Rng rng(2);
    std::vector<int> ids = {CLS, 7, SEP, 8, SEP, PAD, BOS, EOS};
    auto out = corrupt_for_rtd(ids, 0.5, flat_unigram(30), rng);
    CHECK(out.corrupted_ids[0] == CLS);
    CHECK(out.corrupted_ids[2] == SEP);
    CHECK(out.corrupted_ids[4] == SEP);
    CHECK(out.corrupted_ids[5] == PAD);
    CHECK(out.corrupted_ids[6] == BOS);
    CHECK(out.corrupted_ids[7] == EOS);
    CHECK_FALSE(out.labels[0]);
    CHECK_FALSE(out.labels[5]);
}

TEST_CASE("corrupt_for_rtd replaces roughly the requested fraction") {
    Rng rng(3);
    std::vector<int> ids(10000);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = kNumSpecials + static_cast<int>(i % 40);
    auto out = corrupt_for_rtd(ids, 0.15, flat_unigram(kNumSpecials + 40), rng);
    int replaced = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (out.labels[i]) {
            CHECK(out.corrupted_ids[i] != ids[i]);
            ++replaced;
        } else {
            CHECK(out.corrupted_ids[i] == ids[i]);
        }
    }
    double fraction = static_cast<double>(replaced) / static_cast<double>(ids.size());
    CHECK(fraction >= 0.12);
    CHECK(fraction <= 0.18);
}

TEST_CASE("corrupt_for_rtd is deterministic given the seed") {
    std::vector<int> ids(200, 8);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = kNumSpecials + static_cast<int>(i % 14);
    Rng a(9), b(9);
    auto dist = flat_unigram(kNumSpecials + 14);
    auto ca = corrupt_for_rtd(ids, 0.3, dist, a);
    auto cb = corrupt_for_rtd(ids, 0.3, dist, b);
    CHECK(ca.corrupted_ids == cb.corrupted_ids);
    CHECK(ca.labels == cb.labels);
}

TEST_CASE("pretrain with zero epochs changes nothing") {
    SmallCorpus sc = synthetic_corpus(12, 5);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    std::string before = m.current_param_hash();
    auto history = m.pretrain_rtd(sc.seqs, 0.15, 0, 1e-3, 1);
    CHECK(history.empty());
    CHECK(m.current_param_hash() == before);
}

TEST_CASE("freeze pins the hash and blocks pretraining") {
    SmallCorpus sc = synthetic_corpus(12, 6);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    m.freeze();
    std::string h = m.frozen_hash();
    CHECK_FALSE(h.empty());
    (void)m.embed_cls(sc.seqs[0].ids);
    (void)m.embed_cls(sc.seqs[1].ids);
    CHECK(m.current_param_hash() == h);
    CHECK_THROWS_AS(m.pretrain_rtd(sc.seqs, 0.15, 1, 1e-3, 1), ContractError);
    m.freeze();  // idempotent
    CHECK(m.frozen_hash() == h);
    CHECK_THROWS_AS(m.mutable_params(), ContractError);
}

TEST_CASE("embed_cls is deterministic with the right width and self-similarity") {
    SmallCorpus sc = synthetic_corpus(8, 7);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    std::vector<int> ids = sc.vocab.encode("where was alice born ?");
    Tensor a = m.embed_cls(ids);
    Tensor b = m.embed_cls(ids);
    REQUIRE(a.rank() == 1);
    CHECK(a.dim(0) == m.config().d_model);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(cosine(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(m.embed_cls({}), ContractError);
}

TEST_CASE("token_embeddings keeps one row per input id") {
    SmallCorpus sc = synthetic_corpus(8, 8);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    std::vector<int> ids = sc.vocab.encode("alice was born in paris");
    Tensor h1 = m.token_embeddings(ids);
    Tensor h2 = m.token_embeddings(ids);
    CHECK(h1.dim(0) == static_cast<int>(ids.size()));
    CHECK(h1.dim(1) == m.config().d_model);
    for (int64_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);
}

TEST_CASE("perturbing an unused vocabulary row leaves embeddings unchanged") {
    SmallCorpus sc = synthetic_corpus(8, 9);
    EvaluatorConfig cfg = small_eval_config(sc.vocab.size());
    EvaluatorModel a = EvaluatorModel::init(cfg);
    EvaluatorModel b = EvaluatorModel::init(cfg);
    std::vector<int> ids = sc.vocab.encode("alice was born");
    int unused = sc.vocab.size() - 1;
    bool in_input = false;
    for (int id : ids) in_input |= (id == unused);
    REQUIRE_FALSE(in_input);
    int emb = b.mutable_params().find("tok_emb");
    b.mutable_params().mutable_value(emb).at(unused, 0) += 5.0;
    Tensor ea = a.embed_cls(ids);
    Tensor eb = b.embed_cls(ids);
    for (int64_t i = 0; i < ea.size(); ++i) CHECK(ea[i] == eb[i]);
}

TEST_CASE("position matters: permuting the input changes the rows") {
    SmallCorpus sc = synthetic_corpus(8, 10);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    std::vector<int> ids = sc.vocab.encode("alice was born in paris");
    std::vector<int> permuted = ids;
    std::swap(permuted[0], permuted[1]);
    Tensor h1 = m.token_embeddings(ids);
    Tensor h2 = m.token_embeddings(permuted);
    // row 2..n describe the same tokens, but context and position moved
    double diff = 0.0;
    for (int64_t i = 0; i < h1.size(); ++i) diff += std::abs(h1[i] - h2[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("rtd pretraining decreases the training loss over five epochs") {
    // median over 3 seeds on a small synthetic corpus
    std::vector<bool> decreased;
    for (uint64_t seed : {21u, 22u, 23u}) {
        SmallCorpus sc = synthetic_corpus(60, 11);
        EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size(), seed, 32));
        auto history = m.pretrain_rtd(sc.seqs, 0.15, 5, 1e-3, seed);
        REQUIRE(history.size() == 5);
        bool monotone = true;
        for (size_t e = 1; e < history.size(); ++e) {
            monotone = monotone && history[e].train_loss < history[e - 1].train_loss;
            CHECK(std::isfinite(history[e].train_loss));
        }
        decreased.push_back(monotone);
    }
    int count = 0;
    for (bool d : decreased) count += d ? 1 : 0;
    CHECK(count >= 2);  // median over 3 seeds
}

TEST_CASE("evaluator checkpoint round-trips frozen flag and hash") {
    SmallCorpus sc = synthetic_corpus(10, 12);
    EvaluatorModel m = EvaluatorModel::init(small_eval_config(sc.vocab.size()));
    m.freeze();
    std::string path = (std::filesystem::temp_directory_path() / "qg_eval_ckpt.qgf").string();
    m.save(path, sc.vocab);
    auto [loaded, lv] = EvaluatorModel::load(path);
    CHECK(loaded.frozen());
    CHECK(loaded.frozen_hash() == m.frozen_hash());
    CHECK(loaded.current_param_hash() == m.frozen_hash());
    std::vector<int> ids = sc.vocab.encode("who was born in rome ?");
    Tensor ea = m.embed_cls(ids);
    Tensor eb = loaded.embed_cls(ids);
    for (int64_t i = 0; i < ea.size(); ++i) {
        CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-4));  // float32 rounding
    }
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}
