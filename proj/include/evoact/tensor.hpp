#pragma once

#include <functional>
#include <memory>

#include "evoact/core.hpp"

namespace evoact {

// When false, ops skip recording parents/backward closures (inference mode).
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until first accumulation
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    TensorImpl(std::vector<int> s, std::vector<real> d);
    ~TensorImpl();
    TensorImpl(const TensorImpl&) = delete;
    TensorImpl& operator=(const TensorImpl&) = delete;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad();
};

class Rng;

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, real v);
    static Tensor from(std::vector<real> data, std::vector<int> shape);
    static Tensor scalar(real v);
    // i.i.d. N(0, stdev^2) entries.
    static Tensor randn(Rng& rng, std::vector<int> shape, real stdev = 1);

    bool defined() const { return static_cast<bool>(p_); }
    const std::vector<int>& shape() const { return p_->shape; }
    int ndim() const { return static_cast<int>(p_->shape.size()); }
    std::int64_t numel() const { return p_->numel(); }
    // 2-d accessors; a 1-d tensor is treated as a single row.
    int rows() const;
    int cols() const;

    real* data() { return p_->data.data(); }
    const real* data() const { return p_->data.data(); }
    std::vector<real>& vec() { return p_->data; }
    const std::vector<real>& vec() const { return p_->data; }
    real& at(std::int64_t i) { return p_->data[static_cast<std::size_t>(i)]; }
    real at(std::int64_t i) const { return p_->data[static_cast<std::size_t>(i)]; }
    real& at(int r, int c) { return p_->data[static_cast<std::size_t>(r) * cols() + c]; }
    real at(int r, int c) const { return p_->data[static_cast<std::size_t>(r) * cols() + c]; }
    real value() const;  // scalar tensors only

    bool requires_grad() const { return p_->requires_grad; }
    Tensor& set_requires_grad(bool b);

    bool has_grad() const { return !p_->grad.empty(); }
    // Gradient as a tensor of the same shape; zeros if never accumulated.
    Tensor grad() const;
    void zero_grad();

    std::shared_ptr<TensorImpl> impl() const { return p_; }

private:
    std::shared_ptr<TensorImpl> p_;
};

// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
// reachable tensor with requires_grad; throws on non-scalar loss.
void backward(const Tensor& loss);

}  // namespace evoact
