#pragma once

#include <vector>

#include "evoact/dataset.hpp"

namespace evoact {

// Per-dimension mean/std for actions and states; std floored so constant
// dimensions normalize to zero instead of exploding.
struct NormStats {
    static constexpr double kStdFloor = 1e-6;

    std::vector<double> action_mean, action_std;
    std::vector<double> state_mean, state_std;

    bool empty() const { return action_mean.empty(); }

    std::vector<float> normalize_action(const std::vector<float>& flat) const;
    std::vector<float> denormalize_action(const std::vector<float>& flat) const;
    std::vector<float> normalize_state(const std::vector<float>& s) const;
};

NormStats compute_norm_stats(const DemoDataset& ds);

}  // namespace evoact
