// SPDX-License-Identifier: Apache-2.0

#include "sfl/flow/flow.hpp"

#include <cmath>

#include "sfl/error.hpp"
#include "sfl/num/ops.hpp"

namespace sfl::flow {

using num::Tensor;
using num::Var;

std::pair<Tensor, Tensor> interpolant(const Tensor& z0, const Tensor& z1, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("interpolant: t must lie in [0, 1], got " + std::to_string(t));
    }
    if (!z0.same_shape(z1)) num::shape_error("interpolant", z0, z1);
    Tensor v = num::ops::sub(z1, z0);
    Tensor zt;
    if (t == 0.0) {
        zt = z0;
    } else if (t == 1.0) {
        zt = z1;
    } else {
        // z0 + t*(z1 - z0); exact at the endpoints and for z0 == z1.
        zt = num::ops::add(z0, num::ops::scale(v, t));
    }
    return {std::move(zt), std::move(v)};
}

Var cfm_loss(num::Tape& tape, const VelocityGraphFn& model, const std::vector<CfmSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("cfm_loss: empty batch");
    Var total{};
    for (size_t b = 0; b < batch.size(); ++b) {
        const CfmSample& sample = batch[b];
        auto [zt, vt] = interpolant(sample.z0, sample.z1, sample.t);
        Var zt_var = tape.constant(std::move(zt));
        Var pred = model(tape, zt_var, sample.t, b);
        Var err = tape.sub(pred, tape.constant(std::move(vt)));
        Var sample_loss = tape.mean(tape.mul(err, err));
        if (!std::isfinite(tape.value(sample_loss).flat(0))) {
            throw NumericalError("cfm_loss: non-finite loss for batch element " + std::to_string(b));
        }
        total = b == 0 ? sample_loss : tape.add(total, sample_loss);
    }
    return batch.size() == 1 ? total : tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

Tensor ode_sample(const VelocityFn& model, const Tensor& z0, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("ode_sample: need at least one step");
    Tensor z = z0;
    double h = 1.0 / static_cast<double>(n_steps);
    for (int k = 0; k < n_steps; ++k) {
        double t = static_cast<double>(k) * h;
        Tensor v = model(z, t);
        if (!v.same_shape(z)) num::shape_error("ode_sample", z, v);
        z = num::ops::add(z, num::ops::scale(v, h));
        if (!z.all_finite()) {
            throw NumericalError("ode_sample: non-finite state after step " + std::to_string(k));
        }
    }
    return z;
}

}  // namespace sfl::flow
