#pragma once

#include <json.hpp>

#include <string>

#include "evoact/action_expert.hpp"
#include "evoact/env.hpp"
#include "evoact/flow.hpp"

namespace evoact {

struct FlowParams {
    double beta_alpha = 1.5;
    double beta_beta = 1.0;
    double clamp_lo = kTauClampLo;
    double clamp_hi = kTauClampHi;
};

struct TrainParams {
    int stage1_steps = 2000;
    int stage2_steps = 4000;
    int batch = 32;
    double lr_stage1 = 1e-3;
    double lr2_backbone = 1e-4;
    double lr2_expert = 3e-4;
    int warmup = 100;
};

// Every config key any module reads, grouped the way the config file spells
// them. Unknown keys in a file are rejected; the fully-resolved tree is
// snapshotted into the run manifest and every checkpoint.
struct RunConfig {
    BackboneConfig backbone;
    DitConfig dit;  // carries integration.variant, chunk.h, action.dim
    FlowParams flow;
    int sampler_steps = 10;
    TrainParams train;
    EnvParams env;
    int state_dim = 4;
    int replan_every = 0;  // 0 = execute the full chunk before replanning
    std::string run_id;
    std::string out_dir = "runs";
    std::uint64_t seed = 1;

    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
// Strict: every key must be known, nesting must match.
RunConfig config_from_json(const nlohmann::json& j);
// Defaults overlaid with the file's keys (strict).
RunConfig load_config_file(const std::string& path);

}  // namespace evoact
