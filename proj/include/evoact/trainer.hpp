#pragma once

#include <string>

#include "evoact/checkpoint.hpp"
#include "evoact/model.hpp"

namespace evoact {

// Raised when a training step produces a non-finite loss.
struct TrainAbort : std::runtime_error {
    std::int64_t step;
    explicit TrainAbort(std::int64_t s)
        : std::runtime_error("training aborted: non-finite loss at step " + std::to_string(s)), step(s) {}
};

struct TrainOutcome {
    std::int64_t steps_done = 0;
    double first_window_loss = 0;  // mean over the first 50 steps
    double last_window_loss = 0;   // mean over the last 50 steps
    double last_loss = 0;
};

// Stage semantics: 1 freezes the backbone and trains integration + expert
// against cached fused features; 2 unfreezes everything with split learning
// rates; 0 ("single") is the no-freezing ablation baseline.
class Trainer {
public:
    Trainer(VlaModel& model, const DemoDataset& data, std::string run_dir);

    Rng& rng() { return rng_; }
    void set_rng(Rng r) { rng_ = r; }
    std::int64_t global_step() const { return global_step_; }
    void set_global_step(std::int64_t s) { global_step_ = s; }

    TrainOutcome run_stage(int stage, int steps);

    CheckpointData make_checkpoint(std::uint32_t stage) const;
    void save(const std::string& path, std::uint32_t stage) const;

private:
    VlaModel& model_;
    const DemoDataset& data_;
    std::string run_dir_;
    std::string manifest_path_;
    Rng rng_;
    std::int64_t global_step_ = 0;

    struct FeatureCache {
        std::vector<std::vector<real>> per_layer;  // [layer][tuple * T * d]
        int z_tokens = 0;
    };
    FeatureCache build_feature_cache();
};

// Builds a checkpoint-equivalent model: parses the embedded config, rebuilds
// the parameter store, applies parameter bytes and normalization statistics.
std::unique_ptr<VlaModel> model_from_checkpoint(const CheckpointData& ckpt);

// Closed-loop policy wrapper around the model's chunk sampler.
PolicyFn model_policy(VlaModel& model, int sampler_steps, Rng& rng);

struct DriftReport {
    double layer_k = 0;               // score at the extraction layer
    std::vector<double> per_layer;    // cosine similarity per backbone layer
};

// Mean cosine similarity between the two models' attention maps over a
// seeded probe set; bitwise-identical maps score exactly 1.0.
DriftReport attention_drift(VlaModel& ref, VlaModel& cur, Task task, int probes, std::uint64_t seed);

}  // namespace evoact
