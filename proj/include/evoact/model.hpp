#pragma once

#include <memory>
#include <optional>

#include "evoact/config.hpp"
#include "evoact/norm.hpp"

namespace evoact {

// Full policy: backbone + integration + action expert over one ParamStore.
class VlaModel {
public:
    VlaModel(const RunConfig& cfg, std::uint64_t init_seed);

    const RunConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    Backbone& backbone() { return *backbone_; }
    Integration& integration() { return *integration_; }
    ActionExpert& expert() { return *expert_; }

    const NormStats& norm() const { return norm_; }
    void set_norm(NormStats ns) { norm_ = std::move(ns); }

    // Backbone layers the configured variant conditions on.
    std::vector<int> conditioning_layers() const;

    struct VelocityInputs {
        // Either raw observations (full forward) ...
        const std::vector<ObservationSet>* obs = nullptr;
        const std::vector<Instruction>* instr = nullptr;
        // ... or precomputed fused features, one stacked [B*T, d_z] tensor
        // per conditioning layer (frozen-backbone fast path).
        std::vector<Tensor> feats;
        int z_tokens = 0;

        Tensor states_norm;  // [B, d_s], normalized
        Tensor a_noisy;      // [B*H, d_a], normalized action space
        std::vector<double> taus;
    };
    Tensor velocity(const VelocityInputs& in);

    // Full observation -> denormalized H x d_a chunk (Euler sampler).
    std::vector<std::array<float, 3>> predict_chunk(const ObservationSet& obs, const Instruction& instr,
                                                    const RobotState& state, int sampler_steps, Rng& rng);

    // Fused features for the conditioning layers of one batch (no grad).
    struct FeatureSnapshot {
        std::vector<Tensor> feats;  // per conditioning layer, stacked [B*T, d_z]
        int z_tokens = 0;
    };
    FeatureSnapshot compute_features(const std::vector<ObservationSet>& obs,
                                     const std::vector<Instruction>& instr);

    // Closed-form parameter count for the whole model; must equal the store
    // enumeration (double-entry audit).
    static std::int64_t expected_param_count(const RunConfig& cfg);

private:
    RunConfig cfg_;
    ParamStore store_;
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<Integration> integration_;
    std::unique_ptr<ActionExpert> expert_;
    NormStats norm_;
};

}  // namespace evoact
