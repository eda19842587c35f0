#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "evoact/param_store.hpp"

namespace evoact::testing {

// Central finite differences against the analytic gradient of a scalar loss.
// Returns the max relative error over all entries of the listed parameters.
inline double grad_check_params(ParamStore& store, const std::vector<std::string>& names,
                                const std::function<Tensor()>& loss_fn, double h = 1e-5) {
    store.zero_grads();
    Tensor loss = loss_fn();
    backward(loss);
    std::vector<Tensor> grads;
    for (const auto& name : names) grads.push_back(store.gradient(name));

    double worst = 0;
    for (std::size_t ni = 0; ni < names.size(); ++ni) {
        Tensor p = store.get(names[ni]);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            real saved = p.at(i);
            double up, dn;
            p.at(i) = saved + static_cast<real>(h);
            {
                NoGradGuard ng;
                up = loss_fn().value();
            }
            p.at(i) = saved - static_cast<real>(h);
            {
                NoGradGuard ng;
                dn = loss_fn().value();
            }
            p.at(i) = saved;
            double fd = (up - dn) / (2 * h);
            double ana = grads[ni].at(i);
            double denom = std::max({std::fabs(fd), std::fabs(ana), 1e-2});
            worst = std::max(worst, std::fabs(fd - ana) / denom);
        }
    }
    return worst;
}

// Same check for a non-parameter input tensor.
inline double grad_check_input(Tensor& x, const std::function<Tensor()>& loss_fn, double h = 1e-5) {
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);
    Tensor g = x.grad();
    double worst = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        real saved = x.at(i);
        double up, dn;
        x.at(i) = saved + static_cast<real>(h);
        {
            NoGradGuard ng;
            up = loss_fn().value();
        }
        x.at(i) = saved - static_cast<real>(h);
        {
            NoGradGuard ng;
            dn = loss_fn().value();
        }
        x.at(i) = saved;
        double fd = (up - dn) / (2 * h);
        double ana = g.at(i);
        double denom = std::max({std::fabs(fd), std::fabs(ana), 1e-2});
        worst = std::max(worst, std::fabs(fd - ana) / denom);
    }
    return worst;
}

}  // namespace evoact::testing
