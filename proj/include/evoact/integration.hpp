#pragma once

#include <string>
#include <vector>

#include "evoact/backbone.hpp"

namespace evoact {

enum class Variant { A, B, C, D };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Key-value conditioning assembled from fused features and the robot state.
// Variants A/B/D carry one sequence shared by every expert block; variant C
// carries one sequence per block. `source_layers` records which backbone
// layer fed each sequence.
struct ConditioningBundle {
    Variant variant = Variant::A;
    std::vector<Tensor> kv;  // stacked [batch * tkv, d_z]
    int batch = 1;
    int tkv = 0;       // tokens per sample per sequence
    int z_tokens = 0;  // fused-context rows per sample
    std::vector<int> source_layers;
};

// Backbone layers a variant consumes, given extraction layer k of l total.
// Variant C takes the window of `depth` consecutive layers ending no later
// than l and starting no later than k; others take {k}.
std::vector<int> required_layers(Variant v, int k, int l, int depth);

class Integration {
public:
    Integration(int d_s, int d_z, ParamStore& store, Rng& rng);

    int state_dim() const { return d_s_; }

    // One linear map d_s -> d_z per state row; no joint reprojection of the
    // fused context.
    Tensor embed_state(const Tensor& s, ParamStore& store) const;

    // General assembly. `feats` holds one stacked [batch * z_tokens, d_z]
    // tensor per required layer (one for A/B/D, `depth` for C).
    // `action_tokens` (stacked [batch * h, d_z]) is consumed by D only.
    ConditioningBundle build(Variant v, const std::vector<Tensor>& feats,
                             const std::vector<int>& source_layers, const Tensor& state_tokens, int batch,
                             int z_tokens, int dit_depth, const Tensor& action_tokens) const;

private:
    int d_s_;
    int d_z_;
};

// Single-sample builders.
ConditioningBundle build_condition_A(const Tensor& z, const Tensor& state_token);
ConditioningBundle build_condition_B(const Tensor& z, const Tensor& state_token);
ConditioningBundle build_condition_C(const std::vector<Tensor>& layer_feats,
                                     const std::vector<int>& source_layers, const Tensor& state_token,
                                     int dit_depth);
ConditioningBundle build_condition_D(const Tensor& z, const Tensor& state_token, const Tensor& action_tokens);

}  // namespace evoact
