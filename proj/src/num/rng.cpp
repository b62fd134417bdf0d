// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/rng.hpp"

#include <cmath>
#include <numbers>

namespace sfl::num {

namespace {

// SplitMix64 finalizer. Full 64-bit avalanche, so consecutive counters give
// statistically independent outputs.
uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t Rng::next_u64() {
    uint64_t out = mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ull);
    ++counter_;
    return out;
}

double Rng::uniform() {
    // Top 53 bits -> double in [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::uniform_below(uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_below: n must be positive");
    }
    return next_u64() % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Rng Rng::fork(uint64_t stream_id) const {
    return Rng(mix64(seed_ ^ mix64(0x5F0E1D2C3B4A5968ull + stream_id)));
}

Tensor randn(Rng& rng, std::vector<int64_t> shape, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    int64_t n = t.numel();
    dispatch(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.data<T>();
        for (int64_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.normal());
    });
    return t;
}

Tensor rand_uniform(Rng& rng, std::vector<int64_t> shape, double lo, double hi, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    int64_t n = t.numel();
    dispatch(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.data<T>();
        for (int64_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.uniform(lo, hi));
    });
    return t;
}

}  // namespace sfl::num
