#include "evoact/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "evoact/rng.hpp"

namespace evoact {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

TensorImpl::TensorImpl(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw shape_error("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_str(shape));
    }
    for (int dim : shape) {
        if (dim <= 0) throw shape_error("tensor dims must be positive, got " + shape_str(shape));
    }
    alloc_stats::add(static_cast<std::int64_t>(data.size() * sizeof(real)));
}

TensorImpl::~TensorImpl() {
    alloc_stats::add(-static_cast<std::int64_t>((data.size() + grad.size()) * sizeof(real)));
}

void TensorImpl::ensure_grad() {
    if (grad.empty()) {
        grad.assign(data.size(), real(0));
        alloc_stats::add(static_cast<std::int64_t>(grad.size() * sizeof(real)));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::int64_t n = shape_numel(shape);
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::vector<real>(static_cast<std::size_t>(n), real(0))));
}

Tensor Tensor::full(std::vector<int> shape, real v) {
    std::int64_t n = shape_numel(shape);
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::vector<real>(static_cast<std::size_t>(n), v)));
}

Tensor Tensor::from(std::vector<real> data, std::vector<int> shape) {
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(real v) { return from({v}, {1}); }

Tensor Tensor::randn(Rng& rng, std::vector<int> shape, real stdev) {
    std::int64_t n = shape_numel(shape);
    std::vector<real> d(static_cast<std::size_t>(n));
    for (auto& x : d) x = static_cast<real>(rng.normal()) * stdev;
    return from(std::move(d), std::move(shape));
}

int Tensor::rows() const {
    const auto& s = p_->shape;
    if (s.size() == 1) return 1;
    if (s.size() == 2) return s[0];
    throw shape_error("rows(): tensor is not 1-d or 2-d: " + shape_str(s));
}

int Tensor::cols() const {
    const auto& s = p_->shape;
    if (s.size() == 1) return s[0];
    if (s.size() == 2) return s[1];
    throw shape_error("cols(): tensor is not 1-d or 2-d: " + shape_str(s));
}

real Tensor::value() const {
    if (numel() != 1) throw shape_error("value(): tensor is not scalar: " + shape_str(p_->shape));
    return p_->data[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
    p_->requires_grad = b;
    return *this;
}

Tensor Tensor::grad() const {
    Tensor g = Tensor::zeros(p_->shape);
    if (!p_->grad.empty()) std::copy(p_->grad.begin(), p_->grad.end(), g.vec().begin());
    return g;
}

void Tensor::zero_grad() {
    std::fill(p_->grad.begin(), p_->grad.end(), real(0));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }

    // Iterative post-order DFS over parents.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl().get(), 0});
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace evoact
