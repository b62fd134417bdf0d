// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sfl/num/rng.hpp"

namespace sfl::causal {

/// Per-frame noise levels. Shared mode (one level for every frame) is the
/// teacher regime; independent per-frame levels are the diffusion-forcing
/// regime used for causal initialization.
struct NoiseSchedule {
    std::vector<double> t;  // all in [0, 1]
    bool shared = false;
};

/// Independent t_f ~ U[0,1] per frame.
NoiseSchedule df_noise(int n_frames, num::Rng& rng);

/// The teacher regime: one t ~ U[0,1] shared across frames.
NoiseSchedule shared_noise(int n_frames, num::Rng& rng);

}  // namespace sfl::causal
