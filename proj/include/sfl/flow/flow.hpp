// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sfl/num/tape.hpp"
#include "sfl/num/tensor.hpp"

namespace sfl::flow {

/// z_t = (1-t) z0 + t z1 and its constant velocity v_t = z1 - z0.
/// t outside [0, 1] is rejected.
std::pair<num::Tensor, num::Tensor> interpolant(const num::Tensor& z0, const num::Tensor& z1, double t);

/// One conditional-flow-matching sample: source, target and its time. The
/// model closure carries the conditioning for the batch index it receives.
struct CfmSample {
    num::Tensor z0;
    num::Tensor z1;
    double t = 0.0;
};

/// Velocity prediction graph builder: (tape, z_t, t, batch_index) -> Var.
using VelocityGraphFn = std::function<num::Var(num::Tape&, num::Var, double, size_t)>;

/// Mean squared error between predicted and target velocity, averaged over the
/// batch. Differentiable through the model graph. Throws NumericalError with
/// the offending batch id if a sample's loss is not finite.
num::Var cfm_loss(num::Tape& tape, const VelocityGraphFn& model, const std::vector<CfmSample>& batch);

/// Plain-tensor velocity evaluation for sampling: (z, t) -> v.
using VelocityFn = std::function<num::Tensor(const num::Tensor&, double)>;

/// Explicit Euler from t=0 to t=1 with uniform steps:
/// z <- z + (1/n) v(z, k/n). Throws NumericalError with the step index if the
/// state stops being finite.
num::Tensor ode_sample(const VelocityFn& model, const num::Tensor& z0, int n_steps);

}  // namespace sfl::flow
