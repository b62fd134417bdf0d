// SPDX-License-Identifier: Apache-2.0

#include "sfl/causal/dmd.hpp"

#include <cmath>

#include "sfl/error.hpp"
#include "sfl/num/ops.hpp"

namespace sfl::causal {

using num::Tensor;
using num::Var;
namespace ops = num::ops;

DmdStepResult dmd_step(num::ParamStore& generator_params, num::ParamStore& fake_params, const DmdHooks& hooks,
                       num::Rng& rng, const DmdConfig& cfg) {
    DmdStepResult out;

    // Generator sample with the graph kept for the reverse sweep.
    num::Tape gen_tape;
    out.generator_binding = generator_params.bind(gen_tape, true);
    Var x_hat_var = hooks.generator_sample(gen_tape, out.generator_binding, rng);
    out.x_hat = gen_tape.value(x_hat_var);
    if (!out.x_hat.all_finite()) throw NumericalError("dmd_step: non-finite generator sample");

    // Distribution-matching direction at a freshly noised sample.
    double t = rng.uniform(cfg.t_min, cfg.t_max);
    Tensor z0 = hooks.sample_source(rng);
    if (!z0.same_shape(out.x_hat)) num::shape_error("dmd_step", z0, out.x_hat);
    Tensor x_t = ops::add(ops::scale(z0, 1.0 - t), ops::scale(out.x_hat, t));
    Tensor v_teacher = hooks.teacher_velocity(x_t, t);
    Tensor v_fake = hooks.fake_velocity(x_t, t);
    if (!v_teacher.all_finite()) throw NumericalError("dmd_step: non-finite teacher velocity");
    if (!v_fake.all_finite()) throw NumericalError("dmd_step: non-finite fake velocity");
    Tensor seed = ops::sub(v_fake, v_teacher);
    out.grad_seed_norm = seed.max_abs();

    out.generator_grads = gen_tape.backward_seed(x_hat_var, seed);

    // One fake-score regression step on the detached sample.
    FakeStepResult fake = dmd_fake_step(fake_params, hooks, out.x_hat, rng);
    out.fake_grads = std::move(fake.grads);
    out.fake_binding = fake.binding;
    out.fake_loss = fake.loss;
    return out;
}

FakeStepResult dmd_fake_step(num::ParamStore& fake_params, const DmdHooks& hooks, const Tensor& x_hat,
                             num::Rng& rng) {
    FakeStepResult out;
    double t = rng.uniform();
    Tensor z0 = hooks.sample_source(rng);
    num::Tape tape;
    out.binding = fake_params.bind(tape, true);
    Var loss = hooks.fake_cfm_loss(tape, out.binding, z0, x_hat, t);
    out.loss = tape.value(loss).flat(0);
    if (!std::isfinite(out.loss)) throw NumericalError("dmd_step: non-finite fake-score loss");
    out.grads = tape.backward(loss);
    return out;
}

}  // namespace sfl::causal
