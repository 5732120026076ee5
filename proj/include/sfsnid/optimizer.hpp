#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sfsnid/tensor.hpp"

namespace sfsnid {

// Adam with bias correction; the caller supplies the (scheduled) learning rate
// per step. Moment buffers align index-for-index with the parameter list.
struct Adam {
    real beta1 = 0.9;
    real beta2 = 0.999;
    real epsilon = 1e-8;
    std::vector<Tensor> params;
    std::vector<std::vector<real>> m; // first moments
    std::vector<std::vector<real>> v; // second moments
    std::int64_t steps = 0;

    Adam() = default;
    Adam(std::vector<Tensor> ps, real b1, real b2, real eps)
        : beta1(b1), beta2(b2), epsilon(eps), params(std::move(ps)) {
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "Adam: betas must be in [0,1)");
        require(epsilon > 0.0, "Adam: epsilon must be > 0");
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Tensor& p : params) {
            require(p.node()->requires_grad, "Adam: parameter without requires_grad");
            m.emplace_back(p.size(), 0.0);
            v.emplace_back(p.size(), 0.0);
        }
    }

    void zero_grad() {
        for (Tensor& p : params) p.zero_grad();
    }

    // one update from the gradients currently stored on the parameters
    void step(real lr) {
        require(lr >= 0.0, "Adam: negative learning rate");
        ++steps;
        const real bc1 = 1.0 - std::pow(beta1, static_cast<real>(steps));
        const real bc2 = 1.0 - std::pow(beta2, static_cast<real>(steps));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& node = *params[i].node();
            if (!node.has_grad()) continue; // parameter unused this step
            auto& mi = m[i];
            auto& vi = v[i];
            for (std::size_t j = 0; j < mi.size(); ++j) {
                const real g = node.grad[j];
                mi[j] = beta1 * mi[j] + (1.0 - beta1) * g;
                vi[j] = beta2 * vi[j] + (1.0 - beta2) * g * g;
                const real mhat = mi[j] / bc1;
                const real vhat = vi[j] / bc2;
                node.value[j] -= lr * mhat / (std::sqrt(vhat) + epsilon);
            }
        }
    }
};

} // namespace sfsnid
