// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sfl/num/tensor.hpp"

namespace sfl::causal {

/// Per-block key/value store for autoregressive inference. Retained frames
/// are contiguous and end at the newest appended frame; a rolling window
/// bounds occupancy. Entries are plain tensors: gradients never flow through
/// the cache (chunks are detached once finalized).
class KVCache {
public:
    KVCache() = default;
    KVCache(int n_blocks, int tokens_per_frame, int window);

    int n_blocks() const { return static_cast<int>(keys_.size()); }
    int tokens_per_frame() const { return tokens_per_frame_; }
    int window() const { return window_; }
    /// Retained frame count.
    int occupancy() const { return next_frame_ - first_frame_; }
    /// Absolute index of the oldest retained frame.
    int first_frame() const { return first_frame_; }
    /// Absolute index the next appended frame must carry.
    int next_frame() const { return next_frame_; }
    int64_t prefix_tokens() const { return static_cast<int64_t>(occupancy()) * tokens_per_frame_; }

    bool empty() const { return occupancy() == 0; }
    const num::Tensor& keys(int block) const { return keys_[static_cast<size_t>(block)]; }
    const num::Tensor& values(int block) const { return values_[static_cast<size_t>(block)]; }

    /// Starts appending a chunk of n_frames whose first absolute index is
    /// first_frame_index. Throws with diagnostics on index discontinuity.
    void begin_append(int first_frame_index, int n_frames);
    /// Appends the chunk's K/V rows (n_frames*tph x dim) for one block.
    void append(int block, const num::Tensor& k_rows, const num::Tensor& v_rows);
    /// Finishes the chunk and applies the rolling eviction.
    void end_append();

    /// Drops oldest frames until occupancy <= window.
    void evict();

private:
    std::vector<num::Tensor> keys_, values_;
    int tokens_per_frame_ = 0;
    int window_ = 0;
    int first_frame_ = 0;
    int next_frame_ = 0;
    int pending_frames_ = 0;
};

/// Free-function form of the rolling eviction.
inline void evict(KVCache& cache) { cache.evict(); }

}  // namespace sfl::causal
