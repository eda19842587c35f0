#pragma once

#include <string>
#include <vector>

#include "evoact/env.hpp"

namespace evoact {

// One training tuple: the observation at t, the state at t, and the next H
// actions (end-padded by repeating the episode's final action).
struct DemoTuple {
    int episode = 0;
    int t = 0;
    std::vector<float> state;    // d_s
    std::vector<float> actions;  // H * d_a row-major
    std::int64_t obs_offset = 0;
    std::int64_t obs_bytes = 0;
};

struct EpisodeMeta {
    std::uint64_t seed = 0;
    int length = 0;
    bool success = false;
    Instruction instruction;
};

struct DemoDataset {
    Task task = Task::Reach;
    int horizon = 8;
    int action_dim = 3;
    int state_dim = 4;
    int views = 2;
    int image_size = 32;
    std::uint64_t seed = 0;
    std::vector<EpisodeMeta> episodes;
    std::vector<DemoTuple> tuples;
    std::vector<std::vector<float>> obs_blobs;  // per tuple: views*3 planes, loaded from the sidecar

    ObservationSet observation(std::size_t tuple) const;
    const Instruction& instruction(std::size_t tuple) const;
};

struct DemoGenResult {
    int episodes = 0;
    int tuples = 0;
    int attempts = 0;
    std::string jsonl_path;
    std::string sidecar_path;
};

// Rolls the scripted expert until n successful episodes are stored; failures
// are discarded and re-sampled. Aborts once the failure rate exceeds 50%.
DemoGenResult generate_demos(Task task, int n, std::uint64_t seed, const std::string& out_jsonl, int horizon,
                             const EnvParams& params = {});

DemoDataset load_demos(const std::string& jsonl_path);

std::string sidecar_path_for(const std::string& jsonl_path);

}  // namespace evoact
