// SPDX-License-Identifier: Apache-2.0

#include "sfl/causal/mask.hpp"

#include <limits>
#include <stdexcept>

namespace sfl::causal {

using num::DType;
using num::Tensor;

Tensor block_causal_mask(int n_frames, int tokens_per_frame, DType dt) {
    if (n_frames < 1 || tokens_per_frame < 1) {
        throw std::invalid_argument("block_causal_mask: sizes must be positive");
    }
    int64_t n = static_cast<int64_t>(n_frames) * tokens_per_frame;
    Tensor m = Tensor::zeros({n, n}, dt);
    for (int64_t q = 0; q < n; ++q) {
        int64_t qf = q / tokens_per_frame;
        for (int64_t k = 0; k < n; ++k) {
            int64_t kf = k / tokens_per_frame;
            if (kf <= qf) m.set_flat(q * n + k, 1.0);
        }
    }
    return m;
}

Tensor attention_bias(int q_frames, int tokens_per_frame, int64_t prefix_tokens, AttnMode mode, DType dt) {
    int64_t nq = static_cast<int64_t>(q_frames) * tokens_per_frame;
    int64_t nk = prefix_tokens + nq;
    Tensor bias = Tensor::zeros({nq, nk}, dt);
    if (mode == AttnMode::Full) return bias;
    double ninf = -std::numeric_limits<double>::infinity();
    for (int64_t q = 0; q < nq; ++q) {
        int64_t qf = q / tokens_per_frame;
        for (int64_t k = prefix_tokens; k < nk; ++k) {
            int64_t kf = (k - prefix_tokens) / tokens_per_frame;
            if (kf > qf) bias.set_flat(q * nk + k, ninf);
        }
    }
    return bias;
}

}  // namespace sfl::causal
