#include <doctest.h>

#include <cstring>

#include "evoact/integration.hpp"

using namespace evoact;

TEST_CASE("embed_state: zero state with zero bias maps to the zero token") {
    ParamStore store;
    Rng rng(1);
    Integration integ(4, 16, store, rng);
    Tensor s = Tensor::zeros({1, 4});
    Tensor tok = integ.embed_state(s, store);
    CHECK(tok.rows() == 1);
    CHECK(tok.cols() == 16);
    for (int c = 0; c < 16; ++c) CHECK(tok.at(0, c) == real(0));
}

TEST_CASE("embed_state: single-coordinate difference maps to one embedding column") {
    ParamStore store;
    Rng rng(2);
    Integration integ(4, 8, store, rng);
    Tensor s1 = Tensor::from({0.1f, 0.2f, 0.3f, 0.4f}, {1, 4});
    Tensor s2 = Tensor::from({0.1f, 0.2f, 0.9f, 0.4f}, {1, 4});
    Tensor t1 = integ.embed_state(s1, store);
    Tensor t2 = integ.embed_state(s2, store);
    Tensor w = store.get("integration.state_embed.w");
    for (int c = 0; c < 8; ++c) {
        double expect = (0.9 - 0.3) * w.at(2, c);
        CHECK(static_cast<double>(t2.at(0, c)) - t1.at(0, c) == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("variant A bundle: KV = z rows then the state token, reused everywhere") {
    Rng rng(3);
    Tensor z = Tensor::randn(rng, {20, 8});
    Tensor st = Tensor::randn(rng, {1, 8});
    ConditioningBundle b = build_condition_A(z, st);
    CHECK(b.kv.size() == 1);
    CHECK(b.tkv == 21);
    // state token is the last row
    for (int c = 0; c < 8; ++c) CHECK(b.kv[0].at(20, c) == st.at(0, c));
    // information preservation: z rows appear unmodified
    CHECK(std::memcmp(b.kv[0].data(), z.data(), sizeof(real) * 20 * 8) == 0);

    // byte-identical when rebuilt from identical inputs
    ConditioningBundle b2 = build_condition_A(z, st);
    CHECK(std::memcmp(b.kv[0].data(), b2.kv[0].data(),
                      sizeof(real) * static_cast<std::size_t>(b.kv[0].numel())) == 0);
}

TEST_CASE("variant C layer selection") {
    // dit_depth=3, L=6, K=4 -> layers {4,5,6}
    CHECK(required_layers(Variant::C, 4, 6, 3) == std::vector<int>{4, 5, 6});
    // dit_depth=1 reduces to module A built from layer K
    CHECK(required_layers(Variant::C, 4, 6, 1) == std::vector<int>{4});
    // window shifts down when K + depth - 1 would overrun L
    CHECK(required_layers(Variant::C, 4, 6, 4) == std::vector<int>{3, 4, 5, 6});
    // not enough layers at all
    CHECK_THROWS_AS(required_layers(Variant::C, 4, 6, 7), config_error);
    // other variants consume only layer K
    CHECK(required_layers(Variant::A, 4, 6, 4) == std::vector<int>{4});
}

TEST_CASE("variant C bundle carries one sequence per expert block with distinct provenance") {
    Rng rng(4);
    std::vector<Tensor> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(Tensor::randn(rng, {5, 8}));
    Tensor st = Tensor::randn(rng, {1, 8});
    ConditioningBundle b = build_condition_C(feats, {4, 5, 6}, st, 3);
    CHECK(b.kv.size() == 3);
    CHECK(b.tkv == 6);
    CHECK(b.source_layers == std::vector<int>{4, 5, 6});
    std::vector<int> sorted = b.source_layers;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    CHECK(sorted.size() == 3);  // distinct
    CHECK_THROWS_AS(build_condition_C(feats, {4, 5, 6}, st, 4), config_error);
}

TEST_CASE("variant D bundle: joint KV ends with the action-token block") {
    Rng rng(5);
    Tensor z = Tensor::randn(rng, {20, 8});
    Tensor st = Tensor::randn(rng, {1, 8});
    Tensor act = Tensor::randn(rng, {8, 8});
    ConditioningBundle b = build_condition_D(z, st, act);
    CHECK(b.tkv == 29);  // T + 1 + H
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) CHECK(b.kv[0].at(21 + r, c) == act.at(r, c));
    }
    CHECK_THROWS_AS(build_condition_D(z, st, Tensor()), config_error);
}

TEST_CASE("A/B bundles ignore the noisy actions; D's changes under perturbation") {
    Rng rng(6);
    Tensor z = Tensor::randn(rng, {6, 8});
    Tensor st = Tensor::randn(rng, {1, 8});
    Tensor act1 = Tensor::randn(rng, {4, 8});
    std::vector<real> bumped(act1.vec());
    bumped[5] += real(0.5);
    Tensor act2 = Tensor::from(bumped, {4, 8});

    ConditioningBundle a1 = build_condition_A(z, st);
    ConditioningBundle a2 = build_condition_A(z, st);
    CHECK(std::memcmp(a1.kv[0].data(), a2.kv[0].data(),
                      sizeof(real) * static_cast<std::size_t>(a1.kv[0].numel())) == 0);

    ConditioningBundle d1 = build_condition_D(z, st, act1);
    ConditioningBundle d2 = build_condition_D(z, st, act2);
    CHECK(std::memcmp(d1.kv[0].data(), d2.kv[0].data(),
                      sizeof(real) * static_cast<std::size_t>(d1.kv[0].numel())) != 0);
}

TEST_CASE("batched assembly interleaves per-sample segments") {
    ParamStore store;
    Rng rng(7);
    Integration integ(4, 8, store, rng);
    int batch = 2, t = 3;
    Tensor feats = Tensor::randn(rng, {batch * t, 8});
    Tensor st = Tensor::randn(rng, {batch, 8});
    ConditioningBundle b = integ.build(Variant::A, {feats}, {2}, st, batch, t, 1, Tensor());
    CHECK(b.kv[0].rows() == batch * (t + 1));
    // sample 0: rows 0..2 = feats rows 0..2, row 3 = state 0
    for (int c = 0; c < 8; ++c) {
        CHECK(b.kv[0].at(3, c) == st.at(0, c));
        CHECK(b.kv[0].at(7, c) == st.at(1, c));
        CHECK(b.kv[0].at(4, c) == feats.at(3, c));
    }
}

TEST_CASE("variant parsing round trip") {
    for (const char* s : {"A", "B", "C", "D"}) {
        CHECK(to_string(variant_from_string(s)) == s);
    }
    CHECK_THROWS_AS(variant_from_string("E"), config_error);
}
