#pragma once

#include <functional>

#include "evoact/rng.hpp"
#include "evoact/tensor.hpp"

namespace evoact {

inline constexpr double kTauClampLo = 0.02;
inline constexpr double kTauClampHi = 0.98;

struct FlowSample {
    double tau = 0;
    Tensor eps;      // noise draw
    Tensor a_noisy;  // tau * A + (1 - tau) * eps
    Tensor target;   // u = A - eps
};

struct SamplerConfig {
    int steps = 10;  // forward Euler steps over [0, 1]
};

// Beta(alpha, beta) draw clamped to the training range [0.02, 0.98].
double sample_tau(Rng& rng, double alpha, double beta);

// Exact affine combination tau * a + (1 - tau) * eps.
Tensor interpolate(const Tensor& a, const Tensor& eps, double tau);

// Constant-velocity target u = a - eps.
Tensor flow_target(const Tensor& a, const Tensor& eps);

// Mean squared error over all entries (graph node).
Tensor fm_loss(const Tensor& v_pred, const Tensor& u);

// Draws eps and tau and assembles the interpolant plus target.
FlowSample make_flow_sample(const Tensor& a, Rng& rng, double alpha, double beta);

// Forward Euler from tau=0 to tau=1: a += (1/steps) * v(a, tau). The
// velocity callback sees the current chunk and the step's start time.
// Throws (naming the failing tau) if the field returns non-finite values.
using VelocityFn = std::function<Tensor(const Tensor& a, double tau)>;
Tensor euler_integrate(const Tensor& a0, const VelocityFn& velocity, int steps);

}  // namespace evoact
