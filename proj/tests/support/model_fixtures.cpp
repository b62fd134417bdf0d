// SPDX-License-Identifier: Apache-2.0

#include "support/model_fixtures.hpp"

#include <algorithm>
#include <cmath>

namespace sfl::testing {

using model::Denoiser;
using model::DenoiserConfig;
using num::DType;
using num::Rng;
using num::Tensor;
using num::Var;

DenoiserGradTestResult denoiser_cfm_gradcheck(int n_params, uint64_t seed) {
    DenoiserConfig cfg;
    cfg.embed_dim = 32;
    cfg.n_heads = 4;
    cfg.n_blocks = 2;
    cfg.max_frames = 4;
    cfg.s = 4;
    cfg.image_height = 16;
    cfg.image_width = 16;
    cfg.ref_capacity = 2;
    cfg.ffn_mult = 2;
    cfg.pose_hidden = 8;
    cfg.dtype = DType::F64;
    cfg.init_seed = seed;

    Denoiser net(cfg);
    randomize_all_params(net, seed + 1);

    Rng rng(seed + 2);
    int frames = 3;
    model::ConditioningBundle bundle = random_bundle(rng, cfg, frames, 2);
    model::CondTokens cond = model::build_cond_tokens(cfg, bundle);

    int64_t cells = static_cast<int64_t>(frames) * cfg.hl() * cfg.wl();
    Tensor z0 = num::randn(rng, {cells, cfg.latent_channels()}, DType::F64);
    Tensor z1 = num::randn(rng, {cells, cfg.latent_channels()}, DType::F64);
    std::vector<flow::CfmSample> batch = {{z0, z1, 0.37}};

    auto build_model = [&](const Denoiser::Binding& binding) {
        return [&net, &binding, &cond](num::Tape& t, Var zt, double tt, size_t) {
            Denoiser::ForwardArgs fa;
            fa.cond = &cond;
            fa.t_frames = {tt};
            fa.mode = causal::AttnMode::Full;
            return net.forward(t, binding, zt, fa);
        };
    };

    num::Tape tape;
    auto binding = net.bind(tape, true);
    Var loss = flow::cfm_loss(tape, build_model(binding), batch);
    num::GradMap grads = tape.backward(loss);

    auto loss_value = [&]() {
        num::Tape t2;
        t2.set_grad_enabled(false);
        auto b2 = net.bind(t2, false);
        Var l = flow::cfm_loss(t2, build_model(b2), batch);
        return t2.value(l).flat(0);
    };

    // Uniformly random (parameter tensor, element) pairs.
    auto& store = net.params();
    int64_t total = store.total_scalars();
    Rng pick(seed + 3);
    DenoiserGradTestResult result;
    for (int i = 0; i < n_params; ++i) {
        int64_t flat = static_cast<int64_t>(pick.uniform_below(static_cast<uint64_t>(total)));
        size_t which = 0;
        while (flat >= store.value_at(which).numel()) {
            flat -= store.value_at(which).numel();
            ++which;
        }
        Tensor& param = store.value_at(which);
        auto it = grads.find(binding.vars[which].id);
        double analytic = it == grads.end() ? 0.0 : it->second.flat(flat);

        double orig = param.flat(flat);
        double eps = 1e-5;
        param.set_flat(flat, orig + eps);
        double hi = loss_value();
        param.set_flat(flat, orig - eps);
        double lo = loss_value();
        param.set_flat(flat, orig);
        double fd = (hi - lo) / (2 * eps);
        double rel = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
        result.max_rel_err = std::max(result.max_rel_err, rel);
        ++result.checked;
    }
    return result;
}

}  // namespace sfl::testing
