#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "qg/params.hpp"

using namespace qg;

namespace {
std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("serialize round-trips float32-representable values exactly") {
    ParamStore a;
    a.add("w", Tensor::from({2, 2}, {0.5, -0.25, 1.5, 2.0}));
    a.add("b", Tensor::from({3}, {0.0, -1.0, 0.125}));
    std::string path = tmp_path("qg_params_roundtrip.qgf");
    save_params(a, path);

    ParamStore b;
    b.add("w", Tensor::zeros({2, 2}));
    b.add("b", Tensor::zeros({3}));
    load_params(b, path);
    for (int i = 0; i < a.count(); ++i) {
        for (int64_t k = 0; k < a.entry(i).value.size(); ++k) {
            CHECK(b.entry(i).value[k] == a.entry(i).value[k]);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("hash is stable and sensitive to values") {
    ParamStore a;
    int wi = a.add("w", Tensor::from({2}, {1.0, 2.0}));
    std::string h1 = param_hash(a);
    CHECK(h1 == param_hash(a));
    a.mutable_value(wi).at(0) = 1.5;
    CHECK(param_hash(a) != h1);
}

TEST_CASE("hash survives a save/load cycle") {
    ParamStore a;
    a.add("w", Tensor::from({3}, {0.1, 0.2, 0.3}));  // not exactly representable
    std::string path = tmp_path("qg_params_hash.qgf");
    save_params(a, path);
    ParamStore b;
    b.add("w", Tensor::zeros({3}));
    load_params(b, path);
    // values are float32-rounded, but the serialized bytes (and so the hash)
    // are identical
    CHECK(param_hash(a) == param_hash(b));
    std::remove(path.c_str());
}

TEST_CASE("loading validates names and shapes") {
    ParamStore a;
    a.add("w", Tensor::from({2}, {1.0, 2.0}));
    std::string path = tmp_path("qg_params_validate.qgf");
    save_params(a, path);

    ParamStore wrong_name;
    wrong_name.add("v", Tensor::zeros({2}));
    CHECK_THROWS_AS(load_params(wrong_name, path), InputError);

    ParamStore wrong_shape;
    wrong_shape.add("w", Tensor::zeros({3}));
    CHECK_THROWS_AS(load_params(wrong_shape, path), InputError);
    std::remove(path.c_str());
}

TEST_CASE("bad magic is rejected") {
    std::string path = tmp_path("qg_params_magic.qgf");
    write_text_file(path, "NOPE....");
    ParamStore s;
    s.add("w", Tensor::zeros({1}));
    CHECK_THROWS_AS(load_params(s, path), InputError);
    std::remove(path.c_str());
}

TEST_CASE("frozen store rejects mutation") {
    ParamStore s;
    int wi = s.add("w", Tensor::zeros({1}));
    s.set_frozen(true);
    CHECK_THROWS_AS(s.mutable_value(wi), ContractError);
    CHECK_THROWS_AS(s.add("v", Tensor::zeros({1})), ContractError);
}

TEST_CASE("duplicate names are rejected") {
    ParamStore s;
    s.add("w", Tensor::zeros({1}));
    CHECK_THROWS_AS(s.add("w", Tensor::zeros({1})), ContractError);
}
