// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "sfl/causal/kvcache.hpp"
#include "sfl/causal/mask.hpp"
#include "sfl/model/cond.hpp"
#include "sfl/model/config.hpp"
#include "sfl/num/params.hpp"
#include "sfl/num/tape.hpp"

namespace sfl::model {

/// Denoising transformer over (1,2,2)-patchified latent tokens. Each block:
/// time-modulated self-attention (full or block-causal, optionally reading a
/// KV cache), layer norm, per-block raymap/opacity injection, reference-view
/// cross-attention with relative-pose-conditioned keys, feed-forward.
/// f_r, f_o, the cross-attention value projection and the pose encoder output
/// are zero-initialized, so at initialization the output is exactly invariant
/// to raymaps, opacity and references.
class Denoiser {
public:
    explicit Denoiser(DenoiserConfig cfg);

    const DenoiserConfig& config() const { return cfg_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

    using Binding = num::ParamStore::Binding;
    Binding bind(num::Tape& tape, bool trainable) const { return params_.bind(tape, trainable); }

    struct ForwardArgs {
        const CondTokens* cond = nullptr;
        std::vector<double> t_frames;  // per-frame noise time; size 1 broadcasts
        causal::AttnMode mode = causal::AttnMode::Full;
        causal::KVCache* cache = nullptr;  // read: past K/V; may be null
        bool record_cache = false;         // append this pass's K/V per block
        int first_frame_index = 0;         // absolute index of local frame 0
        // Replaces the self-attention bias entirely; equivalence oracles use
        // this to replay windowed attention without a cache.
        std::shared_ptr<const num::Tensor> self_bias_override;
    };

    /// z_t: (frames*hl*wl, latent_channels) on the tape. Returns the predicted
    /// velocity with the same shape. Deterministic.
    num::Var forward(num::Tape& tape, const Binding& binding, num::Var z_t, const ForwardArgs& args) const;

    /// No-grad convenience over plain tensors.
    num::Tensor forward_tensor(const num::Tensor& z_t, const ForwardArgs& args) const;

    /// Copies parameter values (not Adam state) from another instance with an
    /// identical config.
    void load_weights_from(const Denoiser& other);

private:
    DenoiserConfig cfg_;
    num::ParamStore params_;

    // Shape-dependent constants (index maps, positional encodings) cached per
    // (frames, n_ref, first-frame position); purely derived from the config.
    struct ForwardPlan {
        std::shared_ptr<const std::vector<int64_t>> patch_map, unpatch_map, frame_expand;
        std::vector<std::shared_ptr<const std::vector<int64_t>>> frame_slices;  // per frame
        std::vector<std::shared_ptr<const std::vector<int64_t>>> ref_slices;    // per reference
        num::Tensor pe;      // (frames*tph, d)
        num::Tensor pe_ref;  // (n_ref*tph, d)
    };
    mutable std::mutex plan_mutex_;
    mutable std::map<std::tuple<int, int, int>, std::shared_ptr<const ForwardPlan>> plans_;
    std::shared_ptr<const ForwardPlan> plan_for(int frames, int n_ref, int first_frame_index) const;

    struct BlockIdx {
        size_t tmod_s_w, tmod_s_b, tmod_h_w, tmod_h_b;
        size_t wq, bq, wk, bk, wv, bv, wo, bo;
        size_t ln_b_g, ln_b_b, ln_c_g, ln_c_b;
        size_t fr_w, fr_b, fo_w, fo_b;
        size_t cq_w, cq_b, ck_w, ck_b, cv_w, cv_b, co_w, co_b;
        size_t pose1_w, pose1_b, pose2_w, pose2_b;
        size_t ff1_w, ff1_b, ff2_w, ff2_b;
    };
    size_t embed_w_, embed_b_;
    size_t time1_w_, time1_b_, time2_w_, time2_b_;
    size_t lnf_g_, lnf_b_;
    size_t head_w_, head_b_;
    std::vector<BlockIdx> blocks_;

    void init_params();
};

}  // namespace sfl::model
