// Finite-difference oracles for every layer type (64-bit build).
#include <doctest.h>

#include "evoact/action_expert.hpp"
#include "evoact/model.hpp"
#include "grad_check.hpp"

using namespace evoact;
using evoact::testing::grad_check_input;
using evoact::testing::grad_check_params;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("linear gradients match finite differences") {
    ParamStore store;
    Rng rng(1);
    store.normal("w", {4, 3}, rng, 0.7);
    store.normal("b", {3}, rng, 0.5);
    Tensor x = Tensor::randn(rng, {5, 4});
    Tensor t = Tensor::randn(rng, {5, 3});
    auto loss = [&] { return ops::mean_sq_diff(ops::linear(x, store.get("w"), store.get("b")), t); };
    CHECK(grad_check_params(store, {"w", "b"}, loss) < kTol);
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("matmul gradients match finite differences") {
    ParamStore store;
    Rng rng(2);
    store.normal("a", {3, 4}, rng, 0.8);
    store.normal("b", {4, 2}, rng, 0.8);
    Tensor t = Tensor::randn(rng, {3, 2});
    auto loss = [&] { return ops::mean_sq_diff(ops::matmul(store.get("a"), store.get("b")), t); };
    CHECK(grad_check_params(store, {"a", "b"}, loss) < kTol);
}

TEST_CASE("layer_norm gradients match finite differences") {
    ParamStore store;
    Rng rng(3);
    store.normal("g", {6}, rng, 0.5);
    store.normal("b", {6}, rng, 0.5);
    Tensor x = Tensor::randn(rng, {4, 6}, 2.0);
    Tensor t = Tensor::randn(rng, {4, 6});
    auto loss = [&] { return ops::mean_sq_diff(ops::layer_norm(x, store.get("g"), store.get("b")), t); };
    CHECK(grad_check_params(store, {"g", "b"}, loss) < kTol);
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("norm_rows gradients match finite differences") {
    Rng rng(4);
    Tensor x = Tensor::randn(rng, {3, 5}, 1.5);
    Tensor t = Tensor::randn(rng, {3, 5});
    auto loss = [&] { return ops::mean_sq_diff(ops::norm_rows(x), t); };
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("softmax gradients match finite differences on both axes") {
    Rng rng(5);
    Tensor x = Tensor::randn(rng, {4, 3}, 1.2);
    Tensor t = Tensor::randn(rng, {4, 3});
    auto loss1 = [&] { return ops::mean_sq_diff(ops::softmax(x, 1), t); };
    CHECK(grad_check_input(x, loss1) < kTol);
    auto loss0 = [&] { return ops::mean_sq_diff(ops::softmax(x, 0), t); };
    CHECK(grad_check_input(x, loss0) < kTol);
}

TEST_CASE("gelu gradients match finite differences") {
    Rng rng(6);
    Tensor x = Tensor::randn(rng, {4, 4}, 1.5);
    Tensor t = Tensor::randn(rng, {4, 4});
    auto loss = [&] { return ops::mean_sq_diff(ops::gelu(x), t); };
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("elementwise add/sub/mul/scale gradients match finite differences") {
    Rng rng(7);
    Tensor a = Tensor::randn(rng, {3, 3});
    Tensor b = Tensor::randn(rng, {3, 3});
    Tensor t = Tensor::randn(rng, {3, 3});
    auto loss = [&] {
        Tensor s = ops::add(ops::mul(a, b), ops::scale(ops::sub(a, b), real(0.5)));
        return ops::mean_sq_diff(s, t);
    };
    CHECK(grad_check_input(a, loss) < kTol);
    CHECK(grad_check_input(b, loss) < kTol);
}

TEST_CASE("attention core gradients match finite differences") {
    Rng rng(8);
    Tensor q = Tensor::randn(rng, {4, 6});  // batch 2, tq 2
    Tensor k = Tensor::randn(rng, {6, 6});  // tkv 3
    Tensor v = Tensor::randn(rng, {6, 6});
    Tensor t = Tensor::randn(rng, {4, 6});
    auto loss = [&] { return ops::mean_sq_diff(ops::attention_core(q, k, v, 2, 2).out, t); };
    CHECK(grad_check_input(q, loss) < kTol);
    CHECK(grad_check_input(k, loss) < kTol);
    CHECK(grad_check_input(v, loss) < kTol);
}

TEST_CASE("full multi_head_attention gradients match finite differences") {
    ParamStore store;
    Rng rng(9);
    int d = 6;
    for (const char* nm : {"m.wq", "m.wk", "m.wv", "m.wo"}) store.normal(nm, {d, d}, rng, 0.5);
    for (const char* nm : {"m.bq", "m.bk", "m.bv", "m.bo"}) store.normal(nm, {d}, rng, 0.2);
    Tensor q = Tensor::randn(rng, {3, d});
    Tensor kv = Tensor::randn(rng, {4, d});
    Tensor t = Tensor::randn(rng, {3, d});
    auto loss = [&] { return ops::mean_sq_diff(multi_head_attention(q, kv, store, "m", 3).out, t); };
    CHECK(grad_check_params(store, store.names(), loss) < kTol);
    CHECK(grad_check_input(q, loss) < kTol);
    CHECK(grad_check_input(kv, loss) < kTol);
}

TEST_CASE("rows_affine / rows_gate / add_tiled gradients match finite differences") {
    Rng rng(10);
    Tensor x = Tensor::randn(rng, {6, 4});  // batch 2, group 3
    Tensor s = Tensor::randn(rng, {2, 4}, 0.5);
    Tensor sh = Tensor::randn(rng, {2, 4}, 0.5);
    Tensor g = Tensor::randn(rng, {2, 4}, 0.5);
    Tensor p = Tensor::randn(rng, {3, 4}, 0.5);
    Tensor t = Tensor::randn(rng, {6, 4});
    auto loss = [&] {
        Tensor y = ops::add_tiled(x, p, 3);
        y = ops::rows_affine(y, s, sh, 3);
        y = ops::rows_gate(y, g, 3);
        return ops::mean_sq_diff(y, t);
    };
    CHECK(grad_check_input(x, loss) < kTol);
    CHECK(grad_check_input(s, loss) < kTol);
    CHECK(grad_check_input(sh, loss) < kTol);
    CHECK(grad_check_input(g, loss) < kTol);
    CHECK(grad_check_input(p, loss) < kTol);
}

TEST_CASE("gather/concat/slice/unshuffle gradients match finite differences") {
    Rng rng(11);
    Tensor table = Tensor::randn(rng, {5, 3});
    Tensor x = Tensor::randn(rng, {4, 3});
    Tensor t = Tensor::randn(rng, {5, 3});
    auto loss = [&] {
        Tensor g = ops::gather_rows(table, {0, 2, 2, 4});  // repeated id exercises scatter-add
        Tensor c = ops::concat_rows({g, ops::slice_rows(x, 1, 1)});
        return ops::mean_sq_diff(c, t);
    };
    CHECK(grad_check_input(table, loss) < kTol);
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("unshuffle_grid gradient is the exact inverse permutation") {
    Rng rng(12);
    Tensor x = Tensor::randn(rng, {16, 2});
    Tensor t = Tensor::randn(rng, {4, 8});
    auto loss = [&] { return ops::mean_sq_diff(ops::unshuffle_grid(x, 4, 2), t); };
    CHECK(grad_check_input(x, loss) < kTol);
}

TEST_CASE("action expert gradients match finite differences on a tiny config") {
    // Spec invariant: full DiT parameter gradient vs central differences at
    // relative error < 1e-5 on a tiny 64-bit instance.
    ParamStore store;
    Rng rng(13);
    DitConfig cfg;
    cfg.depth = 2;
    cfg.width = 8;
    cfg.n_heads = 2;
    cfg.time_dim = 4;
    cfg.horizon = 2;
    cfg.action_dim = 2;
    cfg.variant = Variant::A;
    ActionExpert expert(cfg, store, rng);
    // perturb the zero-initialized heads so the check exercises them
    for (const auto& name : store.names()) {
        Tensor p = store.get(name);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            p.at(i) += static_cast<real>(rng.normal()) * real(0.05);
        }
    }

    Tensor z = Tensor::randn(rng, {3, 8});
    Tensor state_token = Tensor::randn(rng, {1, 8});
    Tensor a_noisy = Tensor::randn(rng, {2, 2});
    Tensor target = Tensor::randn(rng, {2, 2});
    std::vector<double> taus{0.37};

    auto loss = [&] {
        ConditioningBundle bundle = build_condition_A(z, state_token);
        return ops::mean_sq_diff(expert.forward(a_noisy, bundle, taus, store), target);
    };
    CHECK(grad_check_params(store, store.names(), loss) < 1e-5);
}
