// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "sfl/num/params.hpp"
#include "sfl/num/rng.hpp"
#include "sfl/num/tape.hpp"

namespace sfl::causal {

struct DmdConfig {
    // Noise-level range for the score-difference evaluation; the endpoints
    // are excluded to avoid degenerate interpolants.
    double t_min = 0.02;
    double t_max = 0.98;
};

/// Model plumbing for one distillation step, kept as callables so the same
/// update runs against the full denoiser and against closed-form fixtures.
struct DmdHooks {
    /// Differentiable few-step generator sample on the given tape.
    std::function<num::Var(num::Tape&, const num::ParamStore::Binding&, num::Rng&)> generator_sample;
    /// Frozen teacher velocity at (z, t).
    std::function<num::Tensor(const num::Tensor&, double)> teacher_velocity;
    /// Fake-score velocity at (z, t), evaluated without gradients.
    std::function<num::Tensor(const num::Tensor&, double)> fake_velocity;
    /// CFM regression loss of the fake score on a (z0, target, t) triple.
    std::function<num::Var(num::Tape&, const num::ParamStore::Binding&, const num::Tensor& z0,
                           const num::Tensor& target, double t)>
        fake_cfm_loss;
    /// Fresh source-distribution sample, same shape as generator output.
    std::function<num::Tensor(num::Rng&)> sample_source;
};

struct DmdStepResult {
    num::GradMap generator_grads;
    num::ParamStore::Binding generator_binding;
    num::GradMap fake_grads;
    num::ParamStore::Binding fake_binding;
    num::Tensor x_hat;       // detached generator sample
    double fake_loss = 0.0;
    double grad_seed_norm = 0.0;  // max-abs of the distribution-matching direction
};

/// One distillation step:
///   x_hat = generator sample (traced);
///   t ~ U[t_min, t_max], z0' fresh source, x_t = (1-t) z0' + t x_hat;
///   g = v_fake(x_t, t) - v_teacher(x_t, t)   (distribution-matching direction)
///   generator grads = reverse sweep from x_hat seeded with g;
///   fake grads = CFM regression toward the detached x_hat at t2 ~ U[0,1].
/// The teacher is only evaluated, never updated. The caller applies updates
/// and any fake-vs-generator update ratio.
DmdStepResult dmd_step(num::ParamStore& generator_params, num::ParamStore& fake_params, const DmdHooks& hooks,
                       num::Rng& rng, const DmdConfig& cfg = {});

/// A fake-score-only gradient (the extra updates of the update ratio).
struct FakeStepResult {
    num::GradMap grads;
    num::ParamStore::Binding binding;
    double loss = 0.0;
};
FakeStepResult dmd_fake_step(num::ParamStore& fake_params, const DmdHooks& hooks, const num::Tensor& x_hat,
                             num::Rng& rng);

}  // namespace sfl::causal
