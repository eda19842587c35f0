#include "evoact/backbone.hpp"

#include <cmath>

namespace evoact {

void BackboneConfig::validate() const {
    if (d_z <= 0 || layers <= 0 || n_heads <= 0 || vocab <= 0 || views <= 0) {
        throw config_error("backbone: dimensions must be positive");
    }
    if (extract_layer < 1 || extract_layer > layers) {
        throw config_error("backbone: extract layer " + std::to_string(extract_layer) + " outside [1," +
                           std::to_string(layers) + "]");
    }
    if (d_z % n_heads != 0) {
        throw config_error("backbone: width " + std::to_string(d_z) + " not divisible by " +
                           std::to_string(n_heads) + " heads");
    }
    if (unshuffle <= 0 || patch_size <= 0 || image_size % (patch_size * unshuffle) != 0) {
        throw config_error("backbone: image size " + std::to_string(image_size) +
                           " not divisible by patch_size*unshuffle = " +
                           std::to_string(patch_size * unshuffle));
    }
    if (d_z % (unshuffle * unshuffle) != 0) {
        throw config_error("backbone: width " + std::to_string(d_z) + " not divisible by unshuffle^2");
    }
    if (img_token < 0 || img_token >= vocab) {
        throw config_error("backbone: image placeholder token outside vocabulary");
    }
}

Tensor flatten_patches(const ObservationSet& obs, int view, int patch_size) {
    int h = obs.height, w = obs.width;
    if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0) {
        throw config_error("flatten_patches: image " + std::to_string(h) + "x" + std::to_string(w) +
                           " not divisible by patch size " + std::to_string(patch_size));
    }
    int gy = h / patch_size, gx = w / patch_size;
    int dim = 3 * patch_size * patch_size;
    std::vector<real> out(static_cast<std::size_t>(gy) * gx * dim);
    std::size_t k = 0;
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            for (int c = 0; c < 3; ++c) {
                const float* plane = obs.plane(view, c);
                for (int y = 0; y < patch_size; ++y) {
                    const float* row = plane + static_cast<std::size_t>(py * patch_size + y) * w + px * patch_size;
                    for (int x = 0; x < patch_size; ++x) out[k++] = static_cast<real>(row[x]);
                }
            }
        }
    }
    return Tensor::from(std::move(out), {gy * gx, dim});
}

FusedSequence fuse_sequence(const Instruction& instr, const std::vector<Tensor>& view_tokens,
                            const Tensor& vocab_table, int img_token, int vocab_size) {
    int placeholders = 0;
    for (int id : instr.tokens) {
        if (id < 0 || id >= vocab_size) {
            throw config_error("fuse_sequence: token id " + std::to_string(id) + " outside vocabulary of " +
                               std::to_string(vocab_size));
        }
        if (id == img_token) ++placeholders;
    }
    if (placeholders != static_cast<int>(view_tokens.size())) {
        throw config_error("fuse_sequence: " + std::to_string(placeholders) + " placeholders for " +
                           std::to_string(view_tokens.size()) + " views");
    }

    std::vector<Tensor> parts;
    FusedSequence fused;
    std::vector<int> text_run;
    std::size_t view = 0;
    auto flush_text = [&]() {
        if (text_run.empty()) return;
        parts.push_back(ops::gather_rows(vocab_table, text_run));
        fused.roles.insert(fused.roles.end(), text_run.size(), 0);
        text_run.clear();
    };
    for (int id : instr.tokens) {
        if (id == img_token) {
            flush_text();
            const Tensor& vt = view_tokens[view++];
            if (vt.defined()) {
                parts.push_back(vt);
                fused.roles.insert(fused.roles.end(), static_cast<std::size_t>(vt.rows()), 1);
            }
        } else {
            text_run.push_back(id);
        }
    }
    flush_text();
    if (parts.empty()) throw config_error("fuse_sequence: empty fused sequence");
    fused.tokens = parts.size() == 1 ? parts[0] : ops::concat_rows(parts);
    return fused;
}

namespace {

std::string layer_prefix(int i) { return "backbone.layer" + std::to_string(i); }

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int d = cfg_.d_z;
    int patch_dim = 3 * cfg_.patch_size * cfg_.patch_size;
    real wscale = real(1) / std::sqrt(static_cast<real>(d));
    store.normal("backbone.vocab", {cfg_.vocab, d}, rng, real(0.02));
    store.normal("backbone.pos", {cfg_.max_seq, d}, rng, real(0.02));
    store.normal("backbone.patch.w", {patch_dim, cfg_.d_patch()}, rng,
                 real(1) / std::sqrt(static_cast<real>(patch_dim)));
    store.zeros("backbone.patch.b", {cfg_.d_patch()});
    store.normal("backbone.vproj.w", {d, d}, rng, wscale);
    store.zeros("backbone.vproj.b", {d});
    for (int i = 0; i < cfg_.layers; ++i) {
        std::string p = layer_prefix(i);
        store.constant(p + ".ln1.g", {d}, 1);
        store.zeros(p + ".ln1.b", {d});
        for (const char* nm : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            store.normal(p + nm, {d, d}, rng, wscale);
        for (const char* nm : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) store.zeros(p + nm, {d});
        store.constant(p + ".ln2.g", {d}, 1);
        store.zeros(p + ".ln2.b", {d});
        store.normal(p + ".mlp.w1", {d, 4 * d}, rng, wscale);
        store.zeros(p + ".mlp.b1", {4 * d});
        store.normal(p + ".mlp.w2", {4 * d, d}, rng, real(1) / std::sqrt(static_cast<real>(4 * d)));
        store.zeros(p + ".mlp.b2", {d});
    }
}

Tensor Backbone::embed_view(const ObservationSet& obs, int view, ParamStore& store) const {
    if (obs.height != cfg_.image_size || obs.width != cfg_.image_size) {
        throw config_error("backbone: observation " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                           " does not match configured image size " + std::to_string(cfg_.image_size));
    }
    Tensor patches = flatten_patches(obs, view, cfg_.patch_size);
    Tensor embedded = ops::linear(patches, store.get("backbone.patch.w"), store.get("backbone.patch.b"));
    Tensor grouped = ops::unshuffle_grid(embedded, cfg_.grid_side(), cfg_.unshuffle);
    return ops::linear(grouped, store.get("backbone.vproj.w"), store.get("backbone.vproj.b"));
}

FusedSequence Backbone::fuse(const ObservationSet& obs, const Instruction& instr, ParamStore& store) const {
    if (static_cast<int>(obs.views.size()) != cfg_.views) {
        throw config_error("backbone: expected " + std::to_string(cfg_.views) + " views, got " +
                           std::to_string(obs.views.size()));
    }
    std::vector<Tensor> view_tokens;
    for (int v = 0; v < cfg_.views; ++v) view_tokens.push_back(embed_view(obs, v, store));
    return fuse_sequence(instr, view_tokens, store.get("backbone.vocab"), cfg_.img_token, cfg_.vocab);
}

BackboneOut Backbone::forward(const std::vector<ObservationSet>& obs, const std::vector<Instruction>& instr,
                              ParamStore& store, bool want_maps) const {
    if (obs.empty() || obs.size() != instr.size()) {
        throw shape_error("backbone: observation/instruction counts differ");
    }
    int batch = static_cast<int>(obs.size());

    std::vector<Tensor> sequences;
    BackboneOut out;
    for (int b = 0; b < batch; ++b) {
        FusedSequence f = fuse(obs[static_cast<std::size_t>(b)], instr[static_cast<std::size_t>(b)], store);
        if (b == 0) {
            out.roles = f.roles;
            out.tokens = f.tokens.rows();
        } else if (f.tokens.rows() != out.tokens) {
            throw shape_error("backbone: fused lengths differ across batch (" + std::to_string(out.tokens) +
                              " vs " + std::to_string(f.tokens.rows()) + ")");
        }
        sequences.push_back(f.tokens);
    }
    out.batch = batch;
    int t = out.tokens;
    if (t > cfg_.max_seq) {
        throw config_error("backbone: sequence length " + std::to_string(t) + " exceeds position table of " +
                           std::to_string(cfg_.max_seq));
    }

    Tensor x = sequences.size() == 1 ? sequences[0] : ops::concat_rows(sequences);
    Tensor pos = ops::slice_rows(store.get("backbone.pos"), 0, t);
    x = ops::add_tiled(x, pos, t);
    out.layer_states.push_back(x);

    for (int i = 0; i < cfg_.layers; ++i) {
        std::string p = layer_prefix(i);
        Tensor n1 = ops::layer_norm(x, store.get(p + ".ln1.g"), store.get(p + ".ln1.b"));
        MhaResult att = multi_head_attention(n1, n1, store, p + ".attn", cfg_.n_heads, batch);
        x = ops::add(x, att.out);
        Tensor n2 = ops::layer_norm(x, store.get(p + ".ln2.g"), store.get(p + ".ln2.b"));
        Tensor h = ops::linear(n2, store.get(p + ".mlp.w1"), store.get(p + ".mlp.b1"));
        h = ops::linear(ops::gelu(h), store.get(p + ".mlp.w2"), store.get(p + ".mlp.b2"));
        x = ops::add(x, h);
        out.layer_states.push_back(x);

        if (want_maps && batch == 1) {
            AttentionMap m;
            m.layer = i + 1;
            m.tq = att.tq;
            m.tkv = att.tkv;
            auto avg = att.head_mean(0);
            m.weights.assign(avg.begin(), avg.end());
            m.roles = out.roles;
            out.maps.push_back(std::move(m));
        }
    }
    return out;
}

Tensor Backbone::extract_z(const BackboneOut& out, int k) {
    if (k < 1 || k >= static_cast<int>(out.layer_states.size())) {
        throw config_error("extract_z: layer " + std::to_string(k) + " outside [1," +
                           std::to_string(out.layer_states.size() - 1) + "]");
    }
    return out.layer_states[static_cast<std::size_t>(k)];
}

}  // namespace evoact
