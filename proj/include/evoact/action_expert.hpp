#pragma once

#include <vector>

#include "evoact/integration.hpp"

namespace evoact {

struct DitConfig {
    int depth = 4;
    int width = 128;  // d_model, equals the backbone's d_z
    int n_heads = 4;
    int time_dim = 64;
    Variant variant = Variant::A;
    int horizon = 8;     // H
    int action_dim = 3;  // d_a

    void validate() const;
};

// Static block layout of a variant: which blocks self-attend among action
// tokens and which conditioning sequence each cross block reads.
struct BlockSpec {
    bool self_attention = false;
    int kv_index = 0;  // -1 for self blocks
};
std::vector<BlockSpec> architecture_trace(const DitConfig& cfg);

// Per-block (scale, shift, gate) pairs of width d_model derived from tau,
// one row per batch sample.
struct TimeModulation {
    Tensor scale1, shift1, gate1;  // attention branch
    Tensor scale2, shift2, gate2;  // mlp branch
};

class ActionExpert {
public:
    ActionExpert(const DitConfig& cfg, ParamStore& store, Rng& rng);

    const DitConfig& config() const { return cfg_; }

    // Linear d_a -> d_model per timestep plus learned position embedding.
    // a_noisy is stacked [batch * H, d_a].
    Tensor embed_actions(const Tensor& a_noisy, ParamStore& store, int batch) const;

    // Modulation vectors for every block plus the final norm, from per-sample
    // taus. Throws if any tau is outside [0, 1].
    std::vector<TimeModulation> time_modulation(const std::vector<double>& taus, ParamStore& store) const;
    struct FinalModulation {
        Tensor scale, shift;
    };
    FinalModulation final_modulation(const std::vector<double>& taus, ParamStore& store) const;

    // Velocity field v_theta: stacked [batch * H, d_a]. The bundle's variant
    // must match the configured one.
    Tensor forward(const Tensor& a_noisy, const ConditioningBundle& bundle, const std::vector<double>& taus,
                   ParamStore& store) const;

    // Closed-form learnable-parameter count under the "dit." prefix.
    static std::int64_t count_params(const DitConfig& cfg);

private:
    DitConfig cfg_;
    Tensor time_feature(const std::vector<double>& taus, ParamStore& store) const;
};

}  // namespace evoact
