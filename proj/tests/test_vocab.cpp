#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "qg/common.hpp"
#include "qg/vocab.hpp"

using namespace qg;

TEST_CASE("build_vocab keeps frequent words plus the six specials") {
    bool warn = false;
    Vocab v = Vocab::build(std::vector<std::string>{"the cat", "the dog"}, 1, 100, &warn);
    CHECK_FALSE(warn);
    CHECK(v.size() == 9);
    CHECK(v.contains("the"));
    CHECK(v.contains("cat"));
    CHECK(v.contains("dog"));
    CHECK(v.id("the") >= kNumSpecials);
}

TEST_CASE("min_freq filters out rare words") {
    Vocab v = Vocab::build(std::vector<std::string>{"the cat", "the dog"}, 2, 100);
    CHECK(v.size() == 7);
    CHECK(v.contains("the"));
    CHECK_FALSE(v.contains("cat"));
}

TEST_CASE("max_size keeps most frequent words with lexicographic ties") {
    // freq: a=3, b=2, c=2, d=1 ; room for 2 corpus words
    Vocab v = Vocab::build(std::vector<std::string>{"a a a b b c c d"}, 1, 8);
    CHECK(v.size() == 8);
    CHECK(v.contains("a"));
    CHECK(v.contains("b"));  // ties b/c broken lexicographically
    CHECK_FALSE(v.contains("c"));
    CHECK_FALSE(v.contains("d"));
}

TEST_CASE("tokenize detaches punctuation") {
    auto toks = tokenize("Who won?");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0] == "who");
    CHECK(toks[1] == "won");
    CHECK(toks[2] == "?");
}

TEST_CASE("encode maps OOV to UNK and round-trips known ids") {
    Vocab v = Vocab::build(std::vector<std::string>{"the cat", "the dog"}, 1, 100);
    auto ids = v.encode("the cat");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == v.id("the"));
    CHECK(ids[1] == v.id("cat"));

    auto oov = v.encode("the zebra");
    REQUIRE(oov.size() == 2);
    CHECK(oov[1] == UNK);

    // encode(decode(ids)) == ids for UNK-free ids
    auto again = v.encode(v.decode(ids));
    CHECK(again == ids);
}

TEST_CASE("encoding is case-insensitive") {
    Vocab v = Vocab::build(std::vector<std::string>{"The Cat sat"}, 1, 100);
    CHECK(v.encode("THE CAT SAT") == v.encode("the cat sat"));
}

TEST_CASE("decode joins words, strips non-UNK specials, renders UNK") {
    Vocab v = Vocab::build(std::vector<std::string>{"who won ?"}, 1, 100);
    CHECK(v.decode({v.id("who"), v.id("won"), v.id("?")}) == "who won ?");
    CHECK(v.decode({BOS, v.id("who"), EOS}) == "who");
    CHECK(v.decode({}) == "");
    CHECK(v.decode({UNK}) == "[UNK]");
}

TEST_CASE("decode rejects out-of-range ids naming the offender") {
    Vocab v = Vocab::build(std::vector<std::string>{"a"}, 1, 100);
    try {
        v.decode({v.size()});
        FAIL("expected error");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find(std::to_string(v.size())) != std::string::npos);
    }
}

TEST_CASE("empty corpus produces a specials-only vocab with a warning") {
    bool warn = false;
    Vocab v = Vocab::build(std::vector<std::string>{}, 1, 100, &warn);
    CHECK(warn);
    CHECK(v.size() == kNumSpecials);
}

TEST_CASE("assemble_input layout and truncation") {
    TokenSeq s = assemble_input({7, 8}, {9}, 10);
    CHECK(s.ids == std::vector<int>{CLS, 7, 8, SEP, 9, SEP});
    s.validate(100);

    std::vector<int> long_ctx(100, 7);
    TokenSeq t = assemble_input(long_ctx, {9}, 10);
    CHECK(t.ids.size() == 10);
    CHECK(t.ids == std::vector<int>{CLS, 7, 7, 7, 7, 7, 7, SEP, 9, SEP});

    TokenSeq e = assemble_input({}, {9}, 10);
    CHECK(e.ids == std::vector<int>{CLS, SEP, 9, SEP});

    CHECK_THROWS_AS(assemble_input({1}, std::vector<int>(20, 9), 10), ContractError);
    CHECK_THROWS_AS(assemble_input({1}, {}, 10), ContractError);
}

TEST_CASE("assemble_target layout and truncation") {
    TokenSeq s = assemble_target({7, 8}, 8);
    CHECK(s.ids == std::vector<int>{BOS, 7, 8, EOS});
    s.validate(100);

    TokenSeq t = assemble_target({7, 8, 9, 10}, 4);
    CHECK(t.ids == std::vector<int>{BOS, 7, 8, EOS});

    CHECK_THROWS_AS(assemble_target({7}, 2), ContractError);
}

TEST_CASE("decode of assemble_target strips the specials back off") {
    Vocab v = Vocab::build(std::vector<std::string>{"who won ?"}, 1, 100);
    auto q = v.encode("who won ?");
    TokenSeq t = assemble_target(q, 16);
    CHECK(v.decode(t.ids) == "who won ?");
}

TEST_CASE("source sequences can be parsed back into context and answer") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        int nc = static_cast<int>(rng.index(6));
        int na = 1 + static_cast<int>(rng.index(4));
        std::vector<int> ctx, ans;
        for (int i = 0; i < nc; ++i) ctx.push_back(6 + static_cast<int>(rng.index(40)));
        for (int i = 0; i < na; ++i) ans.push_back(6 + static_cast<int>(rng.index(40)));
        TokenSeq s = assemble_input(ctx, ans, 64);
        s.validate(46);
        // invert: tokens between CLS and first SEP = context, between SEPs = answer
        size_t sep1 = 0, sep2 = 0;
        for (size_t i = 1; i < s.ids.size(); ++i) {
            if (s.ids[i] == SEP) {
                if (!sep1) sep1 = i;
                else sep2 = i;
            }
        }
        std::vector<int> got_ctx(s.ids.begin() + 1, s.ids.begin() + static_cast<long>(sep1));
        std::vector<int> got_ans(s.ids.begin() + static_cast<long>(sep1) + 1,
                                 s.ids.begin() + static_cast<long>(sep2));
        CHECK(got_ctx == ctx);
        CHECK(got_ans == ans);
    }
}

TEST_CASE("token sequence validation catches malformed sequences") {
    TokenSeq bad_src;
    bad_src.kind = TokenSeq::Kind::Source;
    bad_src.ids = {7, SEP, 9, SEP};  // no CLS
    CHECK_THROWS_AS(bad_src.validate(100), ContractError);

    TokenSeq bad_tgt;
    bad_tgt.kind = TokenSeq::Kind::Target;
    bad_tgt.ids = {BOS, 7, 8};  // no EOS
    CHECK_THROWS_AS(bad_tgt.validate(100), ContractError);

    TokenSeq padded_src;
    padded_src.kind = TokenSeq::Kind::Source;
    padded_src.ids = {CLS, 7, SEP, 9, SEP, PAD, PAD};
    padded_src.validate(100);  // trailing PAD run is fine

    TokenSeq pad_mid;
    pad_mid.kind = TokenSeq::Kind::Source;
    pad_mid.ids = {CLS, PAD, 7, SEP, 9, SEP};
    CHECK_THROWS_AS(pad_mid.validate(100), ContractError);
}

TEST_CASE("vocab tsv round-trip keeps ids and specials order") {
    Vocab v = Vocab::build(std::vector<std::string>{"b a a c"}, 1, 100);
    std::string tsv = v.to_tsv();
    CHECK(tsv.find("[PAD]\t0") == 0);
    Vocab w = Vocab::from_tsv(tsv);
    CHECK(w.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(w.word(i) == v.word(i));
}
