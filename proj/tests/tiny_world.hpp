#pragma once

#include <filesystem>
#include <string>

#include "evoact/dataset.hpp"
#include "evoact/model.hpp"

namespace evoact::testing {

// Small-but-complete configuration for fast training tests.
inline RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.backbone.d_z = 16;
    cfg.backbone.layers = 2;
    cfg.backbone.extract_layer = 1;
    cfg.backbone.n_heads = 2;
    cfg.backbone.patch_size = 4;
    cfg.backbone.unshuffle = 2;
    cfg.backbone.image_size = 16;
    cfg.backbone.views = 1;
    cfg.backbone.max_seq = 16;
    cfg.dit.depth = 2;
    cfg.dit.width = 16;
    cfg.dit.n_heads = 2;
    cfg.dit.time_dim = 8;
    cfg.dit.horizon = 4;
    cfg.dit.action_dim = 3;
    cfg.env.image_size = 16;
    cfg.env.views = 1;
    cfg.train.batch = 4;
    cfg.train.warmup = 5;
    cfg.seed = 1;
    return cfg;
}

inline std::string tiny_dataset_path(Task task, int n, std::uint64_t seed, int horizon) {
    std::string path = (std::filesystem::temp_directory_path() /
                        ("evoact_tiny_" + to_string(task) + "_" + std::to_string(n) + "_" + std::to_string(seed) +
                         "_" + std::to_string(horizon) + ".jsonl"))
                           .string();
    if (!std::filesystem::exists(path)) {
        EnvParams p;
        p.image_size = 16;
        p.views = 1;
        generate_demos(task, n, seed, path, horizon, p);
    }
    return path;
}

inline std::string fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace evoact::testing
