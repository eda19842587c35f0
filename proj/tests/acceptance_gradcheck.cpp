// Acceptance criterion 1: full-pipeline gradient check in 64-bit mode.
// Tiny configuration (d_z=16, expert depth 2, H=2, d_a=2, one 8x8 view);
// every parameter's analytic gradient vs central finite differences.
#include <chrono>
#include <cstdio>

#include "evoact/model.hpp"
#include "grad_check.hpp"

using namespace evoact;

int main() {
    auto t0 = std::chrono::steady_clock::now();

    RunConfig cfg;
    cfg.backbone.d_z = 16;
    cfg.backbone.layers = 2;
    cfg.backbone.extract_layer = 1;
    cfg.backbone.n_heads = 2;
    cfg.backbone.patch_size = 4;
    cfg.backbone.unshuffle = 2;
    cfg.backbone.image_size = 8;
    cfg.backbone.views = 1;
    cfg.backbone.max_seq = 8;
    cfg.dit.depth = 2;
    cfg.dit.width = 16;
    cfg.dit.n_heads = 2;
    cfg.dit.time_dim = 8;
    cfg.dit.horizon = 2;
    cfg.dit.action_dim = 2;
    cfg.env.image_size = 8;
    cfg.env.views = 1;

    VlaModel model(cfg, 42);
    Rng rng(7);
    // move the zero-initialized heads off zero so every gradient path is live
    for (const auto& name : model.store().names()) {
        Tensor p = model.store().get(name);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            p.at(i) += static_cast<real>(rng.normal()) * real(0.05);
        }
    }

    ObservationSet obs;
    obs.height = 8;
    obs.width = 8;
    obs.views.emplace_back();
    for (int i = 0; i < 3 * 8 * 8; ++i) {
        obs.views[0].push_back(static_cast<float>(rng.uniform()));
    }
    Instruction instr;
    instr.tokens = {0, 2, 9, 9, 1};
    std::vector<ObservationSet> obs_v{obs};
    std::vector<Instruction> instr_v{instr};

    Tensor states = Tensor::randn(rng, {1, cfg.state_dim});
    Tensor a_noisy = Tensor::randn(rng, {cfg.dit.horizon, cfg.dit.action_dim});
    Tensor target = Tensor::randn(rng, {cfg.dit.horizon, cfg.dit.action_dim});
    std::vector<double> taus{0.41};

    auto loss_fn = [&] {
        VlaModel::VelocityInputs in;
        in.obs = &obs_v;
        in.instr = &instr_v;
        in.states_norm = states;
        in.a_noisy = a_noisy;
        in.taus = taus;
        return fm_loss(model.velocity(in), target);
    };

    double err = evoact::testing::grad_check_params(model.store(), model.store().names(), loss_fn);
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();

    std::int64_t params = model.store().total_params();
    bool ok = err < 1e-5 && secs < 60.0;
    std::printf("[%s] criterion 1: full-pipeline finite-difference gradient check (64-bit): max rel err %.3e over "
                "%lld parameters in %.1fs (tolerance 1e-5, budget 60s)\n",
                ok ? "PASS" : "FAIL", err, static_cast<long long>(params), secs);
    return ok ? 0 : 1;
}
