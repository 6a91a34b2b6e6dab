#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qg/corpus.hpp"
#include "qg/generator.hpp"
#include "qg/optim.hpp"

using namespace qg;

namespace {

Vocab test_vocab() {
    return Vocab::build(std::vector<std::string>{
                            "alice was born in paris in 1905 .",
                            "where was alice born ?",
                            "brian wrote the storm .",
                            "what did brian write ?",
                        },
                        1, 200);
}

GeneratorConfig small_config(int vocab_size, uint64_t seed = 3) {
    GeneratorConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.d_ff = 32;
    cfg.max_src_len = 24;
    cfg.max_tgt_len = 12;
    cfg.vocab_size = vocab_size;
    cfg.seed = seed;
    return cfg;
}

TokenSeq make_src(const Vocab& v, const std::string& ctx, const std::string& ans, int max_len) {
    return assemble_input(v.encode(ctx), v.encode(ans), max_len);
}

}  // namespace

TEST_CASE("init is deterministic given the seed") {
    Vocab v = test_vocab();
    GeneratorModel a = GeneratorModel::init(small_config(v.size(), 9));
    GeneratorModel b = GeneratorModel::init(small_config(v.size(), 9));
    REQUIRE(a.params().count() == b.params().count());
    for (int i = 0; i < a.params().count(); ++i) {
        const Tensor& ta = a.params().entry(i).value;
        const Tensor& tb = b.params().entry(i).value;
        for (int64_t k = 0; k < ta.size(); ++k) CHECK(ta[k] == tb[k]);
    }
}

TEST_CASE("config validation rejects bad head divisibility") {
    GeneratorConfig cfg = small_config(50);
    cfg.d_model = 8;
    cfg.n_heads = 3;
    CHECK_THROWS_AS(GeneratorModel::init(cfg), ContractError);
}

TEST_CASE("positional encoding matches the sinusoidal definition") {
    Tensor pe = positional_encoding(6, 8);
    for (int j = 0; j < 4; ++j) {
        CHECK(pe.at(0, 2 * j) == doctest::Approx(0.0));      // sin(0)
        CHECK(pe.at(0, 2 * j + 1) == doctest::Approx(1.0));  // cos(0)
    }
    for (int pos = 1; pos <= 3; ++pos) {
        CHECK(pe.at(pos, 0) == doctest::Approx(std::sin(pos)).epsilon(1e-12));
    }
    for (int64_t i = 0; i < pe.size(); ++i) {
        CHECK(pe[i] >= -1.0);
        CHECK(pe[i] <= 1.0);
    }
    CHECK_THROWS_AS(positional_encoding(4, 7), ContractError);
}

TEST_CASE("fresh model greedy output is structurally valid") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    TokenSeq src = make_src(v, "alice was born in paris in 1905 .", "paris", 24);
    std::vector<int> out = m.greedy_decode(src, 8);
    CHECK(out.size() <= 8);
    for (int id : out) {
        CHECK(id >= kNumSpecials);
        CHECK(id < v.size());
    }
}

TEST_CASE("greedy decoding is deterministic") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    TokenSeq src = make_src(v, "brian wrote the storm .", "the storm", 24);
    CHECK(m.greedy_decode(src, 8) == m.greedy_decode(src, 8));
}

TEST_CASE("a PAD tail on the source leaves teacher-forced logits unchanged") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    TokenSeq src = make_src(v, "alice was born in paris .", "paris", 24);
    TokenSeq padded = src;
    padded.ids.push_back(PAD);
    padded.ids.push_back(PAD);
    TokenSeq tgt = assemble_target(v.encode("where was alice born ?"), 12);

    TeacherForcedResult a = m.forward_teacher_forced(src, tgt);
    TeacherForcedResult b = m.forward_teacher_forced(padded, tgt);
    REQUIRE(a.logits.same_shape(b.logits));
    for (int64_t i = 0; i < a.logits.size(); ++i) {
        CHECK(a.logits[i] == doctest::Approx(b.logits[i]).epsilon(1e-12));
    }
    CHECK(a.sum_log_prob == doctest::Approx(b.sum_log_prob).epsilon(1e-12));
}

TEST_CASE("causality: changing a target token leaves earlier logits unchanged") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    TokenSeq src = make_src(v, "alice was born in paris .", "paris", 24);
    TokenSeq tgt = assemble_target(v.encode("where was alice born ?"), 12);
    const int k = 3;  // decoder input position to perturb
    TokenSeq perturbed = tgt;
    perturbed.ids[k] = v.id("storm");

    TeacherForcedResult a = m.forward_teacher_forced(src, tgt);
    TeacherForcedResult b = m.forward_teacher_forced(src, perturbed);
    REQUIRE(a.logits.dim(0) == b.logits.dim(0));
    const int vdim = a.logits.dim(1);
    bool later_changed = false;
    for (int t = 0; t < a.logits.dim(0); ++t) {
        double diff = 0.0;
        for (int j = 0; j < vdim; ++j) diff += std::abs(a.logits.at(t, j) - b.logits.at(t, j));
        if (t < k) {
            CHECK(diff == doctest::Approx(0.0).epsilon(1e-12));
        } else if (diff > 1e-9) {
            later_changed = true;
        }
    }
    CHECK(later_changed);
}

TEST_CASE("sum_log_prob is never positive") {
    Vocab v = test_vocab();
    for (uint64_t seed = 0; seed < 4; ++seed) {
        GeneratorModel r = GeneratorModel::init(small_config(v.size(), seed));
        TokenSeq src = make_src(v, "brian wrote the storm .", "the storm", 24);
        TokenSeq tgt = assemble_target(v.encode("what did brian write ?"), 12);
        CHECK(r.forward_teacher_forced(src, tgt).sum_log_prob <= 0.0);
    }
}

TEST_CASE("a model biased hard toward EOS emits an empty question") {
    Vocab v = test_vocab();
    GeneratorConfig cfg = small_config(v.size());
    cfg.tie_embeddings = false;  // separate projection we can rig
    GeneratorModel m = GeneratorModel::init(cfg);
    int out_b = m.params().find("out.b");
    REQUIRE(out_b >= 0);
    m.params().mutable_value(out_b).at(EOS) = 10.0;
    TokenSeq src = make_src(v, "alice was born in paris .", "paris", 24);
    CHECK(m.greedy_decode(src, 8).empty());
}

TEST_CASE("incremental decode session matches the teacher-forced logits") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    TokenSeq src = make_src(v, "alice was born in paris in 1905 .", "paris", 24);
    std::vector<int> q = v.encode("where was alice born ?");
    TokenSeq tgt = assemble_target(q, 12);

    TeacherForcedResult tf = m.forward_teacher_forced(src, tgt);
    GeneratorModel::DecodeSession session(m, src);
    const int steps = static_cast<int>(tgt.ids.size()) - 1;
    for (int t = 0; t < steps; ++t) {
        Tensor row = session.step(tgt.ids[static_cast<size_t>(t)]);
        for (int j = 0; j < v.size(); ++j) {
            CHECK(row.at(j) == doctest::Approx(tf.logits.at(t, j)).epsilon(1e-9));
        }
    }
}

TEST_CASE("full generator gradient check on a small model") {
    Vocab v = test_vocab();
    GeneratorConfig cfg = small_config(v.size());
    GeneratorModel m = GeneratorModel::init(cfg);
    // Jitter the weights away from the tiny init so no gradient is degenerate.
    Rng jitter(99);
    for (int i = 0; i < m.params().count(); ++i) {
        Tensor& p = m.params().mutable_value(i);
        for (int64_t k = 0; k < p.size(); ++k) p[k] += 0.3 * jitter.uniform(-1.0, 1.0);
    }
    TokenSeq src = make_src(v, "alice was born in paris .", "paris", 24);
    TokenSeq tgt = assemble_target(v.encode("where was alice born ?"), 12);

    Tape tape;
    Var slp = m.teacher_forced_log_prob(tape, src, tgt);
    tape.backward(slp, -1.0);  // gradient of L_base
    auto f = [&]() {
        Tape t2;
        TeacherForcedResult aux;
        m.teacher_forced_log_prob(t2, src, tgt, &aux);
        return -aux.sum_log_prob;
    };
    CHECK(finite_diff_check(f, m.params(), 1e-4) < 1e-4);
}

TEST_CASE("checkpoint save/load round-trips behavior") {
    Vocab v = test_vocab();
    GeneratorModel m = GeneratorModel::init(small_config(v.size()));
    std::string path = (std::filesystem::temp_directory_path() / "qg_gen_ckpt.qgf").string();
    m.save(path, v);
    auto [loaded, lv] = GeneratorModel::load(path);
    CHECK(lv.size() == v.size());
    CHECK(loaded.config().d_model == 16);

    TokenSeq src = make_src(v, "brian wrote the storm .", "the storm", 24);
    CHECK(loaded.greedy_decode(src, 8) == loaded.greedy_decode(src, 8));
    TokenSeq tgt = assemble_target(v.encode("what did brian write ?"), 12);
    double a = m.forward_teacher_forced(src, tgt).sum_log_prob;
    double b = loaded.forward_teacher_forced(src, tgt).sum_log_prob;
    CHECK(a == doctest::Approx(b).epsilon(1e-4));
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}

TEST_CASE("overfitting a single pair reproduces its question") {
    Vocab v = test_vocab();
    GeneratorConfig cfg = small_config(v.size(), 5);
    cfg.d_model = 32;
    cfg.d_ff = 64;
    GeneratorModel m = GeneratorModel::init(cfg);
    TokenSeq src = make_src(v, "alice was born in paris in 1905 .", "paris", 24);
    std::vector<int> q = v.encode("where was alice born ?");
    TokenSeq tgt = assemble_target(q, 12);

    AdamConfig acfg;
    acfg.lr = 3e-3;
    AdamState adam = AdamState::init(m.params(), acfg);
    Tape tape;
    for (int step = 0; step < 300; ++step) {
        tape.reset();
        m.params().zero_grads();
        Var slp = m.teacher_forced_log_prob(tape, src, tgt);
        tape.backward(slp, -1.0);
        adam_step(m.params(), adam);
    }
    CHECK(m.greedy_decode(src, 10) == q);
}
