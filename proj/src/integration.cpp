#include "evoact/integration.hpp"

#include <cmath>

namespace evoact {

Variant variant_from_string(const std::string& s) {
    if (s == "A" || s == "a") return Variant::A;
    if (s == "B" || s == "b") return Variant::B;
    if (s == "C" || s == "c") return Variant::C;
    if (s == "D" || s == "d") return Variant::D;
    throw config_error("integration variant must be one of A, B, C, D; got '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::A: return "A";
        case Variant::B: return "B";
        case Variant::C: return "C";
        case Variant::D: return "D";
    }
    return "?";
}

std::vector<int> required_layers(Variant v, int k, int l, int depth) {
    if (v != Variant::C) return {k};
    if (depth > l) {
        throw config_error("variant C needs " + std::to_string(depth) + " backbone layers but only " +
                           std::to_string(l) + " exist");
    }
    int start = std::min(k, l - depth + 1);
    std::vector<int> layers;
    for (int i = 0; i < depth; ++i) layers.push_back(start + i);
    return layers;
}

Integration::Integration(int d_s, int d_z, ParamStore& store, Rng& rng) : d_s_(d_s), d_z_(d_z) {
    if (d_s <= 0 || d_z <= 0) throw config_error("integration: state/context widths must be positive");
    store.normal("integration.state_embed.w", {d_s, d_z}, rng, real(1) / std::sqrt(static_cast<real>(d_s)));
    store.zeros("integration.state_embed.b", {d_z});
}

Tensor Integration::embed_state(const Tensor& s, ParamStore& store) const {
    if (s.cols() != d_s_) {
        throw shape_error("embed_state: state " + shape_str(s.shape()) + " does not match configured dim " +
                          std::to_string(d_s_));
    }
    return ops::linear(s, store.get("integration.state_embed.w"), store.get("integration.state_embed.b"));
}

namespace {

// Interleave per-sample segments: for each sample, its z rows (for the given
// feature tensor), its state token, and optionally its action tokens.
Tensor assemble(const Tensor& feat, const Tensor& state_tokens, const Tensor& action_tokens, int batch,
                int z_tokens, int h) {
    if (batch == 1) {
        std::vector<Tensor> parts{feat, state_tokens};
        if (action_tokens.defined()) parts.push_back(action_tokens);
        return ops::concat_rows(parts);
    }
    std::vector<Tensor> parts;
    parts.reserve(static_cast<std::size_t>(batch) * 3);
    for (int b = 0; b < batch; ++b) {
        parts.push_back(ops::slice_rows(feat, b * z_tokens, z_tokens));
        parts.push_back(ops::slice_rows(state_tokens, b, 1));
        if (action_tokens.defined()) parts.push_back(ops::slice_rows(action_tokens, b * h, h));
    }
    return ops::concat_rows(parts);
}

}  // namespace

ConditioningBundle Integration::build(Variant v, const std::vector<Tensor>& feats,
                                      const std::vector<int>& source_layers, const Tensor& state_tokens,
                                      int batch, int z_tokens, int dit_depth, const Tensor& action_tokens) const {
    if (feats.empty()) throw config_error("integration: no fused features supplied");
    for (const auto& f : feats) {
        if (f.cols() != d_z_ || f.rows() != batch * z_tokens) {
            throw shape_error("integration: feature " + shape_str(f.shape()) + " does not match batch " +
                              std::to_string(batch) + " x " + std::to_string(z_tokens) + " x " +
                              std::to_string(d_z_));
        }
    }
    if (state_tokens.rows() != batch || state_tokens.cols() != d_z_) {
        throw shape_error("integration: state tokens " + shape_str(state_tokens.shape()) +
                          " do not match batch " + std::to_string(batch));
    }

    ConditioningBundle bundle;
    bundle.variant = v;
    bundle.batch = batch;
    bundle.z_tokens = z_tokens;
    bundle.source_layers = source_layers;

    int h = 0;
    Tensor actions;  // consumed by D only
    if (v == Variant::D) {
        if (!action_tokens.defined()) throw config_error("variant D requires embedded action tokens");
        if (action_tokens.cols() != d_z_ || action_tokens.rows() % batch != 0) {
            throw shape_error("variant D: action tokens " + shape_str(action_tokens.shape()) +
                              " do not match batch " + std::to_string(batch));
        }
        h = action_tokens.rows() / batch;
        actions = action_tokens;
    }

    if (v == Variant::C) {
        if (static_cast<int>(feats.size()) != dit_depth || static_cast<int>(source_layers.size()) != dit_depth) {
            throw config_error("variant C: expected " + std::to_string(dit_depth) + " per-layer features, got " +
                               std::to_string(feats.size()));
        }
        for (const auto& f : feats) bundle.kv.push_back(assemble(f, state_tokens, Tensor(), batch, z_tokens, 0));
    } else {
        if (feats.size() != 1) throw config_error("variants A/B/D take exactly one fused feature");
        bundle.kv.push_back(assemble(feats[0], state_tokens, actions, batch, z_tokens, h));
    }
    bundle.tkv = z_tokens + 1 + h;
    return bundle;
}

namespace {

ConditioningBundle single(Variant v, const std::vector<Tensor>& feats, const std::vector<int>& layers,
                          const Tensor& state_token, int dit_depth, const Tensor& action_tokens) {
    if (feats.empty() || !feats[0].defined()) throw config_error("conditioning: fused context required");
    int d = feats[0].cols();
    Tensor st = state_token;
    if (st.ndim() == 1) st = Tensor::from(st.vec(), {1, d});
    ConditioningBundle bundle;
    bundle.variant = v;
    bundle.batch = 1;
    bundle.z_tokens = feats[0].rows();
    bundle.source_layers = layers;
    if (v == Variant::C) {
        for (const auto& f : feats) {
            if (f.cols() != d || f.rows() != bundle.z_tokens) {
                throw shape_error("conditioning: per-layer features disagree in shape");
            }
            bundle.kv.push_back(ops::concat_rows({f, st}));
        }
        bundle.tkv = bundle.z_tokens + 1;
    } else if (v == Variant::D) {
        if (!action_tokens.defined()) throw config_error("variant D requires embedded action tokens");
        bundle.kv.push_back(ops::concat_rows({feats[0], st, action_tokens}));
        bundle.tkv = bundle.z_tokens + 1 + action_tokens.rows();
    } else {
        bundle.kv.push_back(ops::concat_rows({feats[0], st}));
        bundle.tkv = bundle.z_tokens + 1;
    }
    (void)dit_depth;
    return bundle;
}

}  // namespace

ConditioningBundle build_condition_A(const Tensor& z, const Tensor& state_token) {
    return single(Variant::A, {z}, {}, state_token, 1, Tensor());
}

ConditioningBundle build_condition_B(const Tensor& z, const Tensor& state_token) {
    return single(Variant::B, {z}, {}, state_token, 1, Tensor());
}

ConditioningBundle build_condition_C(const std::vector<Tensor>& layer_feats, const std::vector<int>& source_layers,
                                     const Tensor& state_token, int dit_depth) {
    if (static_cast<int>(layer_feats.size()) != dit_depth) {
        throw config_error("variant C: " + std::to_string(layer_feats.size()) + " features for depth " +
                           std::to_string(dit_depth));
    }
    return single(Variant::C, layer_feats, source_layers, state_token, dit_depth, Tensor());
}

ConditioningBundle build_condition_D(const Tensor& z, const Tensor& state_token, const Tensor& action_tokens) {
    return single(Variant::D, {z}, {}, state_token, 1, action_tokens);
}

}  // namespace evoact
