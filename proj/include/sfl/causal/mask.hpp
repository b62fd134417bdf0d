// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sfl/num/tensor.hpp"

namespace sfl::causal {

enum class AttnMode {
    Full,
    BlockCausal,
};

/// Boolean (0/1) token-level mask: token (f, .) may attend to (f', .) iff
/// f' <= f, with full attention inside a frame. Shape
/// (n_frames*tokens_per_frame, n_frames*tokens_per_frame).
num::Tensor block_causal_mask(int n_frames, int tokens_per_frame, num::DType dt = num::DType::F64);

/// Additive attention bias for a query chunk against [cache prefix | chunk]:
/// prefix keys are always visible, chunk keys follow the mode (-inf blocks).
/// Shape (q_frames*tph, prefix_tokens + q_frames*tph).
num::Tensor attention_bias(int q_frames, int tokens_per_frame, int64_t prefix_tokens, AttnMode mode,
                           num::DType dt);

}  // namespace sfl::causal
