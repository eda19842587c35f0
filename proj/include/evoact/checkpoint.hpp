#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evoact/norm.hpp"
#include "evoact/param_store.hpp"

namespace evoact {

struct checkpoint_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Little-endian container: magic "EVOACT1", u8 scalar width, u32 version,
// u64 FNV-1a content hash of everything after the hash field, then the
// sections below. save -> load -> save is byte-identical.
struct CheckpointData {
    static constexpr std::uint32_t kVersion = 1;

    std::string config_json;
    std::string rng_algorithm;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_counter = 0;
    std::uint32_t stage = 0;
    std::int64_t step = 0;
    NormStats norm;

    struct Param {
        std::string name;
        bool frozen = false;
        std::vector<int> shape;
        std::vector<real> data;
        std::vector<real> m;
        std::vector<real> v;
        std::int64_t steps = 0;
    };
    std::vector<Param> params;
};

std::vector<unsigned char> serialize_checkpoint(const CheckpointData& data);
CheckpointData deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::string& path);

// Snapshot a store into checkpoint params (sorted name order).
void collect_params(const ParamStore& store, CheckpointData& data);
// Restore parameter bytes, frozen flags, and optimizer state into an
// already-built store; shapes and the name set must match exactly.
void apply_params(const CheckpointData& data, ParamStore& store);

}  // namespace evoact
