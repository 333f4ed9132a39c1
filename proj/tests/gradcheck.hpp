#pragma once

// Shared gradient-check harness: analytic tape gradients vs the central
// finite-difference oracle for each adapter kind and for the vce forward.
// Instances that land within 1e-3 of a relu kink or a top-k selection
// boundary are resampled, as those points have no two-sided derivative.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dla/adapters.hpp"
#include "dla/tape.hpp"
#include "dla/tensor.hpp"
#include "oracles.hpp"

namespace gradcheck {

using dla::numeric::Rng;
using dla::numeric::Tape;
using dla::numeric::Tensor;
using dla::numeric::TensorPtr;
using dla::numeric::finite_diff_grad;

struct Result {
    bool ok = true;
    double worst_rel_err = 0.0;
    std::string worst_param;
    int instances = 0;
};

// Quadratic loss 0.5 * |z - target|^2 evaluated on a tape.
inline TensorPtr quadratic_loss(Tape& tape, const TensorPtr& z, const TensorPtr& target) {
    auto d = tape.sub(z, target);
    return tape.scale(tape.sum(tape.mul(d, d)), 0.5);
}

/// Compares the analytic gradient already accumulated in each parameter's
/// grad buffer against central differences of `loss_value`, which must
/// rebuild the whole forward from current parameter values.
inline void check_params(Result& res, const std::vector<std::pair<std::string, TensorPtr>>& params,
                         const std::function<double()>& loss_value, double h, double tol) {
    for (const auto& [name, p] : params) {
        Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                std::vector<double> saved = p->data;
                p->data = probe.data;
                const double v = loss_value();
                p->data = saved;
                return v;
            },
            *p, h);
        std::vector<double> analytic = p->grad.empty()
                                           ? std::vector<double>(p->size(), 0.0)
                                           : p->grad;
        const double err = oracles::rel_err(analytic, fd.data);
        if (err > res.worst_rel_err) {
            res.worst_rel_err = err;
            res.worst_param = name;
        }
        if (err >= tol) res.ok = false;
    }
    ++res.instances;
}

}  // namespace gradcheck
