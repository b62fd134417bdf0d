// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfl/geo/camera.hpp"

namespace sfl::cams {

/// Pairwise camera distance by pose index.
using DistanceFn = std::function<double(size_t, size_t)>;

enum class DistanceKind {
    GeodesicNormalized,  // theta/pi + ||ti - tj|| / r_bar, the default
    Frobenius,           // ||Ri - Rj||_F + ||ti - tj||, the appendix variant
};

/// Builds a DistanceFn over poses. For the normalized variant a degenerate
/// r_bar = 0 (all cameras at the origin) is substituted with 1 and reported
/// through used_unit_radius.
DistanceFn make_distance(const std::vector<geo::CameraPose>& poses, DistanceKind kind,
                         bool* used_unit_radius = nullptr);

struct CurationResult {
    std::vector<size_t> group1, group2;        // disjoint cover of all indices
    std::vector<size_t> selected1, selected2;  // ordered FPS picks, seeds first
    std::pair<size_t, size_t> seeds;           // (P1, P2) indices
};

/// Argmax-distance pair over all unordered pairs; ties broken by smallest
/// (i, j) lexicographically. Needs at least two poses.
std::pair<size_t, size_t> farthest_pair(size_t n_poses, const DistanceFn& d);

/// Assigns every index to the nearer seed; ties go to group 1.
std::pair<std::vector<size_t>, std::vector<size_t>> bipartition(size_t n_poses, size_t i, size_t j,
                                                                const DistanceFn& d);

/// Greedy farthest-point sampling inside one group starting from its seed.
/// Each appended index maximizes the minimum distance to the current
/// selection; ties broken by smallest index; stops at min(K, |group|).
std::vector<size_t> fps_select(const std::vector<size_t>& group, size_t seed_index, size_t k,
                               const DistanceFn& d);

/// farthest_pair -> bipartition -> per-group fps_select.
CurationResult curate(const std::vector<geo::CameraPose>& poses, size_t k,
                      DistanceKind kind = DistanceKind::GeodesicNormalized);

std::string curation_to_json(const CurationResult& r);

}  // namespace sfl::cams
