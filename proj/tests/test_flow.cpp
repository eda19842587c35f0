#include <doctest.h>

#include <cmath>
#include <cstring>

#include "evoact/flow.hpp"
#include "evoact/ops.hpp"
#include "evoact/param_store.hpp"

using namespace evoact;

TEST_CASE("interpolate endpoints are bitwise exact") {
    Rng rng(1);
    Tensor a = Tensor::randn(rng, {8, 3});
    Tensor eps = Tensor::randn(rng, {8, 3});
    Tensor at1 = interpolate(a, eps, 1.0);
    Tensor at0 = interpolate(a, eps, 0.0);
    CHECK(std::memcmp(at1.data(), a.data(), sizeof(real) * 24) == 0);
    CHECK(std::memcmp(at0.data(), eps.data(), sizeof(real) * 24) == 0);
}

TEST_CASE("interpolate arithmetic and shape errors") {
    Tensor a = Tensor::from({2, 4}, {1, 2});
    Tensor eps = Tensor::zeros({1, 2});
    Tensor mid = interpolate(a, eps, 0.5);
    CHECK(mid.at(0, 0) == real(1));
    CHECK(mid.at(0, 1) == real(2));
    CHECK_THROWS_AS(interpolate(a, Tensor::zeros({2, 1}), 0.5), shape_error);
}

TEST_CASE("flow_target examples and the path identity") {
    Tensor a = Tensor::from({1, 0}, {1, 2});
    Tensor eps = Tensor::from({0, 1}, {1, 2});
    Tensor u = flow_target(a, eps);
    CHECK(u.at(0, 0) == real(1));
    CHECK(u.at(0, 1) == real(-1));
    CHECK(flow_target(a, a).at(0, 0) == real(0));

    // A_t^tau + (1 - tau) * u = A_t for random triples
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor av = Tensor::randn(rng, {4});
        Tensor ev = Tensor::randn(rng, {4});
        double tau = rng.uniform();
        Tensor noisy = interpolate(av, ev, tau);
        Tensor tgt = flow_target(av, ev);
        for (int i = 0; i < 4; ++i) {
            double recon = noisy.at(i) + (1 - tau) * tgt.at(i);
            CHECK(recon == doctest::Approx(static_cast<double>(av.at(i))).epsilon(1e-5));
        }
    }
}

TEST_CASE("fm_loss examples and batch permutation invariance") {
    Tensor v = Tensor::from({1, 1}, {1, 2});
    Tensor u = Tensor::zeros({1, 2});
    CHECK(fm_loss(v, u).value() == doctest::Approx(1.0));
    CHECK(fm_loss(u, u).value() == real(0));

    Rng rng(3);
    Tensor a = Tensor::randn(rng, {6, 3});
    Tensor b = Tensor::randn(rng, {6, 3});
    // permute rows of both consistently
    std::vector<int> perm{3, 1, 5, 0, 4, 2};
    std::vector<real> pa(18), pb(18);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 3; ++c) {
            pa[static_cast<std::size_t>(r) * 3 + c] = a.at(perm[static_cast<std::size_t>(r)], c);
            pb[static_cast<std::size_t>(r) * 3 + c] = b.at(perm[static_cast<std::size_t>(r)], c);
        }
    }
    CHECK(fm_loss(a, b).value() ==
          doctest::Approx(fm_loss(Tensor::from(pa, {6, 3}), Tensor::from(pb, {6, 3})).value()).epsilon(1e-6));
}

TEST_CASE("sample_tau: clamp contract, reproducibility, uniform mean") {
    Rng rng(4);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double t = sample_tau(rng, 1.0, 1.0);
        REQUIRE(t >= 0.02);
        REQUIRE(t <= 0.98);
        sum += t;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

    Rng a(9), b(9);
    for (int i = 0; i < 32; ++i) CHECK(sample_tau(a, 1.5, 1.0) == sample_tau(b, 1.5, 1.0));

    CHECK_THROWS(sample_tau(rng, 0.0, 1.0));
    CHECK_THROWS(sample_tau(rng, 1.0, -2.0));
}

TEST_CASE("beta(1.5, 1.0) skews draws toward the data end") {
    Rng rng(5);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += sample_tau(rng, 1.5, 1.0);
    // Beta(1.5, 1) has mean 0.6
    CHECK(sum / n == doctest::Approx(0.6).epsilon(0.03));
}

TEST_CASE("euler: one step of the constant oracle field recovers the target exactly") {
    // integer-valued tensors keep float arithmetic exact
    Tensor a_star = Tensor::from({3, -2, 5, 1}, {2, 2});
    Tensor eps = Tensor::from({1, 4, -2, 0}, {2, 2});
    Tensor u = flow_target(a_star, eps);
    Tensor got = euler_integrate(eps, [&](const Tensor&, double) { return u; }, 1);
    CHECK(std::memcmp(got.data(), a_star.data(), sizeof(real) * 4) == 0);
}

TEST_CASE("euler: constant field is exact for any step count on dyadic values") {
    Tensor a_star = Tensor::from({4, -8, 16, 2}, {2, 2});
    Tensor eps = Tensor::from({2, 4, -8, 0}, {2, 2});
    Tensor u = flow_target(a_star, eps);
    for (int s : {1, 2, 4, 8}) {
        Tensor got = euler_integrate(eps, [&](const Tensor&, double) { return u; }, s);
        CHECK(std::memcmp(got.data(), a_star.data(), sizeof(real) * 4) == 0);
    }
}

TEST_CASE("euler: first-order convergence on v = -A") {
    // closed form A(1) = e^{-1} A(0)
    Tensor a0 = Tensor::from({2, -1, 0.5f, 3}, {2, 2});
    auto field = [](const Tensor& a, double) { return ops::scale(a, real(-1)); };
    auto terminal_err = [&](int s) {
        Tensor got = euler_integrate(a0, field, s);
        double err = 0;
        for (int i = 0; i < 4; ++i) {
            err = std::max(err, std::fabs(static_cast<double>(got.at(i)) - std::exp(-1.0) * a0.at(i)));
        }
        return err;
    };
    for (int s : {5, 10, 20}) {
        double ratio = terminal_err(s) / terminal_err(2 * s);
        CHECK(ratio > 1.7);
        CHECK(ratio < 2.3);
    }
}

TEST_CASE("euler: fixed seed gives identical chunks, and NaN fields name the failing tau") {
    Rng r1(6), r2(6);
    Tensor a1 = Tensor::randn(r1, {4, 2});
    Tensor a2 = Tensor::randn(r2, {4, 2});
    auto field = [](const Tensor& a, double tau) { return ops::scale(a, static_cast<real>(tau - 0.5)); };
    Tensor o1 = euler_integrate(a1, field, 10);
    Tensor o2 = euler_integrate(a2, field, 10);
    CHECK(std::memcmp(o1.data(), o2.data(), sizeof(real) * 8) == 0);

    auto bad = [](const Tensor& a, double tau) {
        return tau >= 0.5 ? Tensor::full(a.shape(), std::numeric_limits<real>::quiet_NaN()) : Tensor::zeros(a.shape());
    };
    try {
        euler_integrate(a1, bad, 10);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("0.5") != std::string::npos);
    }
}

TEST_CASE("make_flow_sample holds its construction invariants bitwise") {
    Rng rng(7);
    Tensor a = Tensor::randn(rng, {8, 3});
    FlowSample s = make_flow_sample(a, rng, 1.5, 1.0);
    CHECK(s.tau >= 0.02);
    CHECK(s.tau <= 0.98);
    Tensor again = interpolate(a, s.eps, s.tau);
    CHECK(std::memcmp(again.data(), s.a_noisy.data(), sizeof(real) * 24) == 0);
    Tensor u = flow_target(a, s.eps);
    CHECK(std::memcmp(u.data(), s.target.data(), sizeof(real) * 24) == 0);
}

TEST_CASE("training on one pair drives a free-velocity parameter to u") {
    // With u = A - eps fixed, minimizing fm_loss over an unconstrained
    // velocity tensor recovers u to high precision.
    ParamStore store;
    Tensor v = store.zeros("v", {2, 2});
    Rng rng(8);
    Tensor a = Tensor::randn(rng, {2, 2});
    Tensor eps = Tensor::randn(rng, {2, 2});
    Tensor u = flow_target(a, eps);
    AdamConfig cfg;
    cfg.weight_decay = 0;
    // step the rate down so the adaptive update settles below 1e-4
    for (double lr : {0.05, 0.005, 2e-4}) {
        cfg.lr = lr;
        for (int step = 0; step < 1200; ++step) {
            store.zero_grads();
            Tensor loss = fm_loss(v, u);
            backward(loss);
            store.adamw_step(cfg);
        }
    }
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(static_cast<double>(v.at(i)) - u.at(i)) < 1e-4);
}

TEST_CASE("training tau draws stay inside the clamp over many draws") {
    Rng rng(9);
    for (int i = 0; i < 1000000; ++i) {
        double t = sample_tau(rng, 1.5, 1.0);
        if (t < 0.02 || t > 0.98) {
            FAIL("tau escaped the clamp");
        }
    }
    CHECK(true);
}
