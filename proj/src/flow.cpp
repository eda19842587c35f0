#include "evoact/flow.hpp"

#include <algorithm>
#include <cmath>

#include "evoact/ops.hpp"

namespace evoact {

double sample_tau(Rng& rng, double alpha, double beta) {
    double x = rng.beta(alpha, beta);
    return std::clamp(x, kTauClampLo, kTauClampHi);
}

Tensor interpolate(const Tensor& a, const Tensor& eps, double tau) {
    if (a.shape() != eps.shape()) {
        throw shape_error("interpolate: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(eps.shape()));
    }
    real t = static_cast<real>(tau);
    real omt = static_cast<real>(1.0 - tau);
    std::vector<real> d(a.vec().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = t * a.vec()[i] + omt * eps.vec()[i];
    return Tensor::from(std::move(d), a.shape());
}

Tensor flow_target(const Tensor& a, const Tensor& eps) {
    if (a.shape() != eps.shape()) {
        throw shape_error("flow_target: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(eps.shape()));
    }
    std::vector<real> d(a.vec().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.vec()[i] - eps.vec()[i];
    return Tensor::from(std::move(d), a.shape());
}

Tensor fm_loss(const Tensor& v_pred, const Tensor& u) { return ops::mean_sq_diff(v_pred, u); }

FlowSample make_flow_sample(const Tensor& a, Rng& rng, double alpha, double beta) {
    FlowSample s;
    s.tau = sample_tau(rng, alpha, beta);
    std::vector<real> noise(a.vec().size());
    for (auto& v : noise) v = static_cast<real>(rng.normal());
    s.eps = Tensor::from(std::move(noise), a.shape());
    s.a_noisy = interpolate(a, s.eps, s.tau);
    s.target = flow_target(a, s.eps);
    return s;
}

Tensor euler_integrate(const Tensor& a0, const VelocityFn& velocity, int steps) {
    if (steps < 1) throw config_error("euler_integrate: steps must be >= 1");
    Tensor a = Tensor::from(a0.vec(), a0.shape());
    double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        double tau = static_cast<double>(k) / steps;
        Tensor v = velocity(a, tau);
        if (v.shape() != a.shape()) {
            throw shape_error("euler_integrate: velocity shape " + shape_str(v.shape()) +
                              " does not match state " + shape_str(a.shape()));
        }
        for (std::size_t i = 0; i < a.vec().size(); ++i) {
            real next = a.vec()[i] + static_cast<real>(dt) * v.vec()[i];
            if (!std::isfinite(next)) {
                throw std::runtime_error("euler_integrate: non-finite state at tau=" + std::to_string(tau));
            }
            a.vec()[i] = next;
        }
    }
    return a;
}

}  // namespace evoact
