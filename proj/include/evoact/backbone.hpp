#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evoact/ops.hpp"
#include "evoact/param_store.hpp"

namespace evoact {

// Multi-view RGB observation; each view is 3 row-major H*W float planes
// (R plane, G plane, B plane), values in [0,1].
struct ObservationSet {
    int height = 32;
    int width = 32;
    std::vector<std::vector<float>> views;

    const float* plane(int view, int channel) const {
        return views[static_cast<std::size_t>(view)].data() +
               static_cast<std::size_t>(channel) * height * width;
    }
};

struct Instruction {
    std::vector<int> tokens;
};

struct BackboneConfig {
    int d_z = 128;
    int layers = 6;         // L
    int extract_layer = 4;  // K: layer whose hidden state becomes the fused context
    int n_heads = 4;
    int patch_size = 4;
    int unshuffle = 2;  // f
    int vocab = 64;
    int img_token = 1;  // reserved placeholder id
    int image_size = 32;
    int views = 2;
    int max_seq = 96;

    int grid_side() const { return image_size / patch_size; }
    int d_patch() const { return d_z / (unshuffle * unshuffle); }
    int tokens_per_view() const {
        int s = grid_side() / unshuffle;
        return s * s;
    }
    void validate() const;
};

// Head-averaged attention pattern of one layer plus the token-role mask
// (0 = text token, 1 = image token) needed for image-region visualization.
struct AttentionMap {
    int layer = 0;
    int tq = 0;
    int tkv = 0;
    std::vector<float> weights;  // row-major tq x tkv
    std::vector<std::uint8_t> roles;
};

struct FusedSequence {
    Tensor tokens;                     // [T, d_z]
    std::vector<std::uint8_t> roles;   // length T
};

struct BackboneOut {
    std::vector<Tensor> layer_states;  // index 0 = embeddings, 1..L = block outputs; stacked [B*T, d_z]
    int batch = 1;
    int tokens = 0;  // T per sample
    std::vector<std::uint8_t> roles;
    std::vector<AttentionMap> maps;  // per layer; filled only when requested (batch == 1)
};

// Row-major patch extraction: patch vector is channel-major (all R pixels of
// the patch, then G, then B), pixels row-major inside the patch.
Tensor flatten_patches(const ObservationSet& obs, int view, int patch_size);

// Replaces the i-th placeholder occurrence by the i-th view's token block.
// An undefined tensor stands for a view contributing zero tokens.
FusedSequence fuse_sequence(const Instruction& instr, const std::vector<Tensor>& view_tokens,
                            const Tensor& vocab_table, int img_token, int vocab_size);

class Backbone {
public:
    Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& rng);

    const BackboneConfig& config() const { return cfg_; }

    // Patch embedding -> pixel unshuffle -> vision projection for one view.
    Tensor embed_view(const ObservationSet& obs, int view, ParamStore& store) const;

    // Fused token sequence for one sample (placeholder replacement + roles).
    FusedSequence fuse(const ObservationSet& obs, const Instruction& instr, ParamStore& store) const;

    // Transformer stack over a batch of equal-length samples.
    BackboneOut forward(const std::vector<ObservationSet>& obs, const std::vector<Instruction>& instr,
                        ParamStore& store, bool want_maps = false) const;

    static Tensor extract_z(const BackboneOut& out, int k);

private:
    BackboneConfig cfg_;
};

}  // namespace evoact
