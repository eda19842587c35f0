#include "evoact/action_expert.hpp"

#include <cmath>

namespace evoact {

void DitConfig::validate() const {
    if (depth < 1) throw config_error("dit: depth must be >= 1");
    if (width <= 0 || n_heads <= 0 || width % n_heads != 0) {
        throw config_error("dit: width " + std::to_string(width) + " not divisible by " + std::to_string(n_heads) +
                           " heads");
    }
    if (time_dim <= 0 || time_dim % 2 != 0) throw config_error("dit: time embedding dim must be even");
    if (horizon < 1 || action_dim < 1) throw config_error("dit: horizon and action dim must be >= 1");
}

std::vector<BlockSpec> architecture_trace(const DitConfig& cfg) {
    std::vector<BlockSpec> trace;
    for (int i = 0; i < cfg.depth; ++i) {
        BlockSpec b;
        switch (cfg.variant) {
            case Variant::A:
            case Variant::D:
                b.self_attention = false;
                b.kv_index = 0;
                break;
            case Variant::B:
                b.self_attention = (i % 2 == 1);
                b.kv_index = b.self_attention ? -1 : 0;
                break;
            case Variant::C:
                b.self_attention = false;
                b.kv_index = i;
                break;
        }
        trace.push_back(b);
    }
    return trace;
}

namespace {

std::string block_prefix(int i) { return "dit.block" + std::to_string(i); }

const char* kModNames[6] = {".mod.scale1", ".mod.shift1", ".mod.gate1",
                            ".mod.scale2", ".mod.shift2", ".mod.gate2"};

}  // namespace

ActionExpert::ActionExpert(const DitConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int d = cfg_.width;
    real wscale = real(1) / std::sqrt(static_cast<real>(d));
    store.normal("dit.embed.w", {cfg_.action_dim, d}, rng,
                 real(1) / std::sqrt(static_cast<real>(cfg_.action_dim)));
    store.zeros("dit.embed.b", {d});
    store.normal("dit.pos", {cfg_.horizon, d}, rng, real(0.02));
    store.normal("dit.time.w1", {cfg_.time_dim, d}, rng, real(1) / std::sqrt(static_cast<real>(cfg_.time_dim)));
    store.zeros("dit.time.b1", {d});
    store.normal("dit.time.w2", {d, d}, rng, wscale);
    store.zeros("dit.time.b2", {d});
    for (int i = 0; i < cfg_.depth; ++i) {
        std::string p = block_prefix(i);
        for (const char* nm : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            store.normal(p + nm, {d, d}, rng, wscale);
        for (const char* nm : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) store.zeros(p + nm, {d});
        store.normal(p + ".mlp.w1", {d, 4 * d}, rng, wscale);
        store.zeros(p + ".mlp.b1", {4 * d});
        store.normal(p + ".mlp.w2", {4 * d, d}, rng, real(1) / std::sqrt(static_cast<real>(4 * d)));
        store.zeros(p + ".mlp.b2", {d});
        // Zero-initialized modulation heads: identity blocks at step 0.
        for (const char* nm : kModNames) {
            store.zeros(p + nm + std::string(".w"), {d, d});
            store.zeros(p + nm + std::string(".b"), {d});
        }
    }
    store.zeros("dit.final.mod.scale.w", {d, d});
    store.zeros("dit.final.mod.scale.b", {d});
    store.zeros("dit.final.mod.shift.w", {d, d});
    store.zeros("dit.final.mod.shift.b", {d});
    // Zero-initialized output head: v == 0 everywhere at initialization.
    store.zeros("dit.final.w", {d, cfg_.action_dim});
    store.zeros("dit.final.b", {cfg_.action_dim});
}

Tensor ActionExpert::embed_actions(const Tensor& a_noisy, ParamStore& store, int batch) const {
    if (a_noisy.cols() != cfg_.action_dim || a_noisy.rows() != batch * cfg_.horizon) {
        throw shape_error("embed_actions: chunk " + shape_str(a_noisy.shape()) + " does not match batch " +
                          std::to_string(batch) + " x " + std::to_string(cfg_.horizon) + " x " +
                          std::to_string(cfg_.action_dim));
    }
    Tensor x = ops::linear(a_noisy, store.get("dit.embed.w"), store.get("dit.embed.b"));
    return ops::add_tiled(x, store.get("dit.pos"), cfg_.horizon);
}

Tensor ActionExpert::time_feature(const std::vector<double>& taus, ParamStore& store) const {
    if (taus.empty()) throw config_error("time_modulation: no taus supplied");
    std::vector<real> rows;
    rows.reserve(taus.size() * static_cast<std::size_t>(cfg_.time_dim));
    for (double tau : taus) {
        if (tau < 0.0 || tau > 1.0) {
            throw config_error("time_modulation: tau " + std::to_string(tau) + " outside [0,1]");
        }
        Tensor e = ops::sinusoidal_embedding(tau, cfg_.time_dim);
        rows.insert(rows.end(), e.vec().begin(), e.vec().end());
    }
    Tensor emb = Tensor::from(std::move(rows), {static_cast<int>(taus.size()), cfg_.time_dim});
    Tensor f = ops::gelu(ops::linear(emb, store.get("dit.time.w1"), store.get("dit.time.b1")));
    return ops::linear(f, store.get("dit.time.w2"), store.get("dit.time.b2"));
}

std::vector<TimeModulation> ActionExpert::time_modulation(const std::vector<double>& taus,
                                                          ParamStore& store) const {
    Tensor f = time_feature(taus, store);
    std::vector<TimeModulation> mods;
    for (int i = 0; i < cfg_.depth; ++i) {
        std::string p = block_prefix(i);
        Tensor* slots[6];
        TimeModulation m;
        slots[0] = &m.scale1;
        slots[1] = &m.shift1;
        slots[2] = &m.gate1;
        slots[3] = &m.scale2;
        slots[4] = &m.shift2;
        slots[5] = &m.gate2;
        for (int j = 0; j < 6; ++j) {
            *slots[j] = ops::linear(f, store.get(p + kModNames[j] + std::string(".w")),
                                    store.get(p + kModNames[j] + std::string(".b")));
        }
        mods.push_back(std::move(m));
    }
    return mods;
}

ActionExpert::FinalModulation ActionExpert::final_modulation(const std::vector<double>& taus,
                                                             ParamStore& store) const {
    Tensor f = time_feature(taus, store);
    FinalModulation m;
    m.scale = ops::linear(f, store.get("dit.final.mod.scale.w"), store.get("dit.final.mod.scale.b"));
    m.shift = ops::linear(f, store.get("dit.final.mod.shift.w"), store.get("dit.final.mod.shift.b"));
    return m;
}

Tensor ActionExpert::forward(const Tensor& a_noisy, const ConditioningBundle& bundle,
                             const std::vector<double>& taus, ParamStore& store) const {
    if (bundle.variant != cfg_.variant) {
        throw config_error("dit: bundle variant " + to_string(bundle.variant) + " does not match configured " +
                           to_string(cfg_.variant));
    }
    int batch = bundle.batch;
    if (static_cast<int>(taus.size()) != batch) {
        throw shape_error("dit: " + std::to_string(taus.size()) + " taus for batch " + std::to_string(batch));
    }
    auto trace = architecture_trace(cfg_);
    for (const auto& b : trace) {
        if (b.kv_index >= static_cast<int>(bundle.kv.size())) {
            throw config_error("dit: bundle supplies " + std::to_string(bundle.kv.size()) +
                               " sequences but block needs index " + std::to_string(b.kv_index));
        }
    }

    int h = cfg_.horizon;
    Tensor f = time_feature(taus, store);
    Tensor x = embed_actions(a_noisy, store, batch);

    for (int i = 0; i < cfg_.depth; ++i) {
        std::string p = block_prefix(i);
        auto mod = [&](int j) {
            return ops::linear(f, store.get(p + kModNames[j] + std::string(".w")),
                               store.get(p + kModNames[j] + std::string(".b")));
        };
        Tensor xm = ops::rows_affine(ops::norm_rows(x), mod(0), mod(1), h);
        Tensor att;
        if (trace[static_cast<std::size_t>(i)].self_attention) {
            att = multi_head_attention(xm, xm, store, p + ".attn", cfg_.n_heads, batch).out;
        } else {
            const Tensor& kv = bundle.kv[static_cast<std::size_t>(trace[static_cast<std::size_t>(i)].kv_index)];
            att = multi_head_attention(xm, kv, store, p + ".attn", cfg_.n_heads, batch).out;
        }
        x = ops::add(x, ops::rows_gate(att, mod(2), h));
        Tensor xm2 = ops::rows_affine(ops::norm_rows(x), mod(3), mod(4), h);
        Tensor m = ops::linear(xm2, store.get(p + ".mlp.w1"), store.get(p + ".mlp.b1"));
        m = ops::linear(ops::gelu(m), store.get(p + ".mlp.w2"), store.get(p + ".mlp.b2"));
        x = ops::add(x, ops::rows_gate(m, mod(5), h));
    }

    Tensor fs = ops::linear(f, store.get("dit.final.mod.scale.w"), store.get("dit.final.mod.scale.b"));
    Tensor ft = ops::linear(f, store.get("dit.final.mod.shift.w"), store.get("dit.final.mod.shift.b"));
    Tensor xf = ops::rows_affine(ops::norm_rows(x), fs, ft, h);
    return ops::linear(xf, store.get("dit.final.w"), store.get("dit.final.b"));
}

std::int64_t ActionExpert::count_params(const DitConfig& cfg) {
    std::int64_t d = cfg.width;
    std::int64_t embed = cfg.action_dim * d + d;
    std::int64_t pos = static_cast<std::int64_t>(cfg.horizon) * d;
    std::int64_t time = cfg.time_dim * d + d + d * d + d;
    std::int64_t attn = 4 * (d * d + d);
    std::int64_t mlp = d * 4 * d + 4 * d + 4 * d * d + d;
    std::int64_t mods = 6 * (d * d + d);
    std::int64_t per_block = attn + mlp + mods;
    std::int64_t final_mod = 2 * (d * d + d);
    std::int64_t final_head = d * cfg.action_dim + cfg.action_dim;
    return embed + pos + time + cfg.depth * per_block + final_mod + final_head;
}

}  // namespace evoact
