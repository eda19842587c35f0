#include "evoact/param_store.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace evoact {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;

}  // namespace

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    auto it = entries_.find(name);
    if (it != entries_.end()) {
        if (it->second.tensor.shape() != t.shape()) {
            throw shape_error("parameter '" + name + "' already exists with shape " +
                              shape_str(it->second.tensor.shape()) + ", requested " + shape_str(t.shape()));
        }
        return it->second.tensor;
    }
    t.set_requires_grad(true);
    Entry e;
    e.tensor = t;
    e.m.assign(static_cast<std::size_t>(t.numel()), real(0));
    e.v.assign(static_cast<std::size_t>(t.numel()), real(0));
    entries_.emplace(name, std::move(e));
    return t;
}

Tensor ParamStore::zeros(const std::string& name, std::vector<int> shape) {
    if (entries_.count(name)) return entries_.at(name).tensor;
    return insert(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::normal(const std::string& name, std::vector<int> shape, Rng& rng, real stdev) {
    if (entries_.count(name)) return entries_.at(name).tensor;
    return insert(name, Tensor::randn(rng, std::move(shape), stdev));
}

Tensor ParamStore::constant(const std::string& name, std::vector<int> shape, real value) {
    if (entries_.count(name)) return entries_.at(name).tensor;
    return insert(name, Tensor::full(std::move(shape), value));
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second.tensor;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) {
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
    Entry& e = entry(name);
    e.frozen = frozen;
    e.tensor.set_requires_grad(!frozen);
}

void ParamStore::freeze_prefix(const std::string& prefix, bool frozen) {
    for (auto& [k, e] : entries_) {
        if (k.rfind(prefix, 0) == 0) {
            e.frozen = frozen;
            e.tensor.set_requires_grad(!frozen);
        }
    }
}

bool ParamStore::frozen(const std::string& name) const { return entry(name).frozen; }

std::int64_t ParamStore::total_params() const {
    std::int64_t n = 0;
    for (const auto& [k, e] : entries_) n += e.tensor.numel();
    return n;
}

std::int64_t ParamStore::trainable_params() const {
    std::int64_t n = 0;
    for (const auto& [k, e] : entries_) {
        if (!e.frozen) n += e.tensor.numel();
    }
    return n;
}

Tensor ParamStore::gradient(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.frozen) return Tensor::zeros(e.tensor.shape());
    return e.tensor.grad();
}

void ParamStore::zero_grads() {
    for (auto& [k, e] : entries_) e.tensor.zero_grad();
}

void ParamStore::adamw_step(const AdamConfig& cfg, const std::function<double(const std::string&)>& lr_for) {
    for (auto& [name, e] : entries_) {
        if (e.frozen) continue;
        double lr = lr_for(name);
        if (lr <= 0.0) throw std::invalid_argument("adamw_step: learning rate must be positive for '" + name + "'");
        e.steps += 1;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.steps));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.steps));
        const bool has_grad = e.tensor.has_grad();
        const std::vector<real>& g = e.tensor.impl()->grad;
        std::vector<real>& p = e.tensor.vec();
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
            double m = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi;
            double v = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi;
            e.m[i] = static_cast<real>(m);
            e.v[i] = static_cast<real>(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[i];
            p[i] = static_cast<real>(p[i] - lr * update);
        }
    }
}

void ParamStore::adamw_step(const AdamConfig& cfg) {
    adamw_step(cfg, [&](const std::string&) { return cfg.lr; });
}

std::uint64_t ParamStore::content_hash() const { return content_hash_prefix(""); }

std::uint64_t ParamStore::content_hash_prefix(const std::string& prefix) const {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) != 0) continue;
        h = fnv1a(h, name.data(), name.size());
        h = fnv1a(h, e.tensor.data(), static_cast<std::size_t>(e.tensor.numel()) * sizeof(real));
    }
    return h;
}

void ParamStore::for_each(const std::function<void(const std::string&, Entry&)>& fn) {
    for (auto& [k, e] : entries_) fn(k, e);
}

void ParamStore::for_each(const std::function<void(const std::string&, const Entry&)>& fn) const {
    for (const auto& [k, e] : entries_) fn(k, e);
}

}  // namespace evoact
