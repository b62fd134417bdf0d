// SPDX-License-Identifier: Apache-2.0

#include "sfl/causal/noise.hpp"

#include <stdexcept>

namespace sfl::causal {

NoiseSchedule df_noise(int n_frames, num::Rng& rng) {
    if (n_frames < 1) throw std::invalid_argument("df_noise: need at least one frame");
    NoiseSchedule s;
    s.shared = false;
    s.t.reserve(static_cast<size_t>(n_frames));
    for (int f = 0; f < n_frames; ++f) s.t.push_back(rng.uniform());
    return s;
}

NoiseSchedule shared_noise(int n_frames, num::Rng& rng) {
    if (n_frames < 1) throw std::invalid_argument("shared_noise: need at least one frame");
    NoiseSchedule s;
    s.shared = true;
    s.t.assign(static_cast<size_t>(n_frames), rng.uniform());
    return s;
}

}  // namespace sfl::causal
