// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "sfl/num/tensor.hpp"

namespace sfl::num {

/// Counter-based pseudo-random generator. Output at step k is a pure function
/// of (seed, k), so streams replay identically regardless of platform and can
/// be serialized as (seed, counter, spare).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t uniform_below(uint64_t n);

    /// Standard normal via Box-Muller; the second sample of each pair is cached.
    double normal();

    /// Derives an independent substream. Forking does not advance this stream.
    Rng fork(uint64_t stream_id) const;

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    bool has_spare() const { return has_spare_; }
    double spare() const { return spare_; }
    void restore(uint64_t counter, bool has_spare, double spare) {
        counter_ = counter;
        has_spare_ = has_spare;
        spare_ = spare;
    }

private:
    uint64_t seed_ = 0;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// i.i.d. standard normal samples; advances rng deterministically.
Tensor randn(Rng& rng, std::vector<int64_t> shape, DType dt);

/// Uniform [lo, hi) samples.
Tensor rand_uniform(Rng& rng, std::vector<int64_t> shape, double lo, double hi, DType dt);

}  // namespace sfl::num
