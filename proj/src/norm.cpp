#include "evoact/norm.hpp"

#include <cmath>

namespace evoact {

namespace {

std::vector<float> apply(const std::vector<float>& flat, const std::vector<double>& mean,
                         const std::vector<double>& std, bool forward) {
    std::size_t dim = mean.size();
    std::vector<float> out(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        std::size_t d = i % dim;
        double v = flat[i];
        out[i] = static_cast<float>(forward ? (v - mean[d]) / std[d] : v * std[d] + mean[d]);
    }
    return out;
}

}  // namespace

std::vector<float> NormStats::normalize_action(const std::vector<float>& flat) const {
    return apply(flat, action_mean, action_std, true);
}

std::vector<float> NormStats::denormalize_action(const std::vector<float>& flat) const {
    return apply(flat, action_mean, action_std, false);
}

std::vector<float> NormStats::normalize_state(const std::vector<float>& s) const {
    return apply(s, state_mean, state_std, true);
}

NormStats compute_norm_stats(const DemoDataset& ds) {
    if (ds.tuples.empty()) throw std::runtime_error("compute_norm_stats: empty dataset");
    NormStats ns;
    int da = ds.action_dim, dsd = ds.state_dim;
    ns.action_mean.assign(static_cast<std::size_t>(da), 0.0);
    ns.action_std.assign(static_cast<std::size_t>(da), 0.0);
    ns.state_mean.assign(static_cast<std::size_t>(dsd), 0.0);
    ns.state_std.assign(static_cast<std::size_t>(dsd), 0.0);

    std::int64_t a_rows = 0, s_rows = 0;
    for (const auto& tp : ds.tuples) {
        for (std::size_t i = 0; i < tp.actions.size(); ++i) ns.action_mean[i % da] += tp.actions[i];
        a_rows += static_cast<std::int64_t>(tp.actions.size()) / da;
        for (std::size_t i = 0; i < tp.state.size(); ++i) ns.state_mean[i % dsd] += tp.state[i];
        s_rows += 1;
    }
    for (auto& m : ns.action_mean) m /= static_cast<double>(a_rows);
    for (auto& m : ns.state_mean) m /= static_cast<double>(s_rows);

    for (const auto& tp : ds.tuples) {
        for (std::size_t i = 0; i < tp.actions.size(); ++i) {
            double d = tp.actions[i] - ns.action_mean[i % da];
            ns.action_std[i % da] += d * d;
        }
        for (std::size_t i = 0; i < tp.state.size(); ++i) {
            double d = tp.state[i] - ns.state_mean[i % dsd];
            ns.state_std[i % dsd] += d * d;
        }
    }
    for (auto& v : ns.action_std) v = std::max(std::sqrt(v / static_cast<double>(a_rows)), NormStats::kStdFloor);
    for (auto& v : ns.state_std) v = std::max(std::sqrt(v / static_cast<double>(s_rows)), NormStats::kStdFloor);
    return ns;
}

}  // namespace evoact
