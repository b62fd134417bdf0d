// SPDX-License-Identifier: Apache-2.0

#include "sfl/causal/kvcache.hpp"

#include <stdexcept>
#include <string>

#include "sfl/num/ops.hpp"

namespace sfl::causal {

using num::Tensor;

KVCache::KVCache(int n_blocks, int tokens_per_frame, int window)
    : keys_(static_cast<size_t>(n_blocks)),
      values_(static_cast<size_t>(n_blocks)),
      tokens_per_frame_(tokens_per_frame),
      window_(window) {
    if (n_blocks < 1 || tokens_per_frame < 1 || window < 1) {
        throw std::invalid_argument("KVCache: block count, token count and window must be positive");
    }
}

void KVCache::begin_append(int first_frame_index, int n_frames) {
    if (pending_frames_ != 0) throw std::logic_error("KVCache: append already in progress");
    if (first_frame_index != next_frame_) {
        throw std::runtime_error("KVCache: frame-index discontinuity: cache expects frame " +
                                 std::to_string(next_frame_) + ", chunk starts at " +
                                 std::to_string(first_frame_index));
    }
    if (n_frames < 1) throw std::invalid_argument("KVCache: chunk must contain at least one frame");
    pending_frames_ = n_frames;
}

void KVCache::append(int block, const Tensor& k_rows, const Tensor& v_rows) {
    if (pending_frames_ == 0) throw std::logic_error("KVCache: append without begin_append");
    if (block < 0 || block >= n_blocks()) throw std::invalid_argument("KVCache: block out of range");
    int64_t expect_rows = static_cast<int64_t>(pending_frames_) * tokens_per_frame_;
    if (k_rows.rank() != 2 || k_rows.dim(0) != expect_rows || !k_rows.same_shape(v_rows)) {
        throw std::runtime_error("KVCache: appended K/V rows do not match the pending chunk (" +
                                 std::to_string(expect_rows) + " rows expected)");
    }
    auto& k = keys_[static_cast<size_t>(block)];
    auto& v = values_[static_cast<size_t>(block)];
    if (!k.defined() || k.numel() == 0) {
        k = k_rows;
        v = v_rows;
    } else {
        k = num::ops::concat_rows({&k, &k_rows});
        v = num::ops::concat_rows({&v, &v_rows});
    }
}

void KVCache::end_append() {
    if (pending_frames_ == 0) throw std::logic_error("KVCache: end_append without begin_append");
    next_frame_ += pending_frames_;
    pending_frames_ = 0;
    evict();
}

void KVCache::evict() {
    int drop = occupancy() - window_;
    if (drop <= 0) return;
    int64_t drop_rows = static_cast<int64_t>(drop) * tokens_per_frame_;
    for (size_t b = 0; b < keys_.size(); ++b) {
        const Tensor& k = keys_[b];
        const Tensor& v = values_[b];
        int64_t rows = k.dim(0), cols = k.dim(1);
        Tensor nk = Tensor::zeros({rows - drop_rows, cols}, k.dtype());
        Tensor nv = Tensor::zeros({rows - drop_rows, cols}, v.dtype());
        for (int64_t i = 0; i < (rows - drop_rows) * cols; ++i) {
            nk.set_flat(i, k.flat(drop_rows * cols + i));
            nv.set_flat(i, v.flat(drop_rows * cols + i));
        }
        keys_[b] = std::move(nk);
        values_[b] = std::move(nv);
    }
    first_frame_ += drop;
}

}  // namespace sfl::causal
