#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evoact/rng.hpp"
#include "evoact/tensor.hpp"

namespace evoact {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Named parameter registry with per-parameter frozen flags and optimizer
// moments. Iteration order is the sorted name order everywhere, which keeps
// training and serialization deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor tensor;
        bool frozen = false;
        std::vector<real> m;  // first moment
        std::vector<real> v;  // second moment
        std::int64_t steps = 0;
    };

    // Create-or-get. Creating an existing name with a different shape throws.
    Tensor zeros(const std::string& name, std::vector<int> shape);
    Tensor normal(const std::string& name, std::vector<int> shape, Rng& rng, real stdev);
    Tensor constant(const std::string& name, std::vector<int> shape, real value);

    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    Tensor get(const std::string& name) const;
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::size_t size() const { return entries_.size(); }

    void set_frozen(const std::string& name, bool frozen);
    void freeze_prefix(const std::string& prefix, bool frozen);
    bool frozen(const std::string& name) const;

    std::int64_t total_params() const;
    std::int64_t trainable_params() const;

    // Gradient aligned with the parameter: exact zeros for frozen parameters
    // or parameters the loss never touched.
    Tensor gradient(const std::string& name) const;

    void zero_grads();

    // Decoupled weight-decay update with bias-corrected moments. Frozen
    // parameters are untouched bitwise. `lr_for` maps name -> learning rate
    // (uniform overload below). Throws on nonpositive lr.
    void adamw_step(const AdamConfig& cfg, const std::function<double(const std::string&)>& lr_for);
    void adamw_step(const AdamConfig& cfg);

    // FNV-1a over parameter bytes in name order; freeze diagnostics.
    std::uint64_t content_hash() const;
    std::uint64_t content_hash_prefix(const std::string& prefix) const;

    void for_each(const std::function<void(const std::string&, Entry&)>& fn);
    void for_each(const std::function<void(const std::string&, const Entry&)>& fn) const;

private:
    std::map<std::string, Entry> entries_;
    Tensor insert(const std::string& name, Tensor t);
};

}  // namespace evoact
