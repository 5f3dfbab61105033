#pragma once

// Central finite-difference gradient checker. The oracle path re-runs the
// forward closure at wiggled parameter values, so it is independent of the
// backward implementation it verifies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "avseg/autodiff.hpp"
#include "avseg/rng.hpp"

namespace testsupport {

inline double rel_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

// f builds a scalar Value from the params' CURRENT values each call.
inline GradCheck gradcheck(const std::function<avseg::ad::Value()>& f,
                           const std::vector<avseg::ad::Value>& params, int coords_per_tensor,
                           avseg::Rng& rng) {
    using avseg::ad::backward;
    GradCheck res;

    avseg::ad::Value loss = f();
    for (const auto& p : params) p.node()->grad_alloc = false;
    backward(loss);
    std::vector<avseg::Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(p.has_grad() ? p.grad() : avseg::Tensor(p.shape()));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        avseg::Tensor& value = params[pi].node()->value;
        const int64_t n = value.numel();
        for (int c = 0; c < coords_per_tensor; ++c) {
            const int64_t i = rng.uniform_int(n);
            const double v0 = value[i];
            const double h = 1e-5 * std::max(1.0, std::abs(v0));
            value[i] = v0 + h;
            const double lp = f().val()[0];
            value[i] = v0 - h;
            const double lm = f().val()[0];
            value[i] = v0;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = grads[pi][i];
            if (std::abs(numeric) < 1e-10 && std::abs(analytic) < 1e-10) {
                ++res.checked;
                continue;
            }
            res.max_rel_err = std::max(res.max_rel_err, rel_error(analytic, numeric));
            ++res.checked;
        }
    }
    return res;
}

}  // namespace testsupport
