// SPDX-License-Identifier: Apache-2.0

#include "sfl/cams/curation.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace sfl::cams {

DistanceFn make_distance(const std::vector<geo::CameraPose>& poses, DistanceKind kind, bool* used_unit_radius) {
    if (used_unit_radius) *used_unit_radius = false;
    if (kind == DistanceKind::Frobenius) {
        return [&poses](size_t i, size_t j) { return geo::frobenius_pose_distance(poses[i], poses[j]); };
    }
    double r_bar = geo::mean_radius(poses);
    if (r_bar <= 0.0) {
        // All cameras at the origin; substitute unit radius so the translation
        // term stays defined (it is zero anyway).
        r_bar = 1.0;
        if (used_unit_radius) *used_unit_radius = true;
    }
    return [&poses, r_bar](size_t i, size_t j) { return geo::pose_distance(poses[i], poses[j], 1.0, r_bar); };
}

std::pair<size_t, size_t> farthest_pair(size_t n_poses, const DistanceFn& d) {
    if (n_poses < 2) throw std::invalid_argument("farthest_pair: need at least 2 poses");
    size_t bi = 0, bj = 1;
    double best = -1.0;
    for (size_t i = 0; i + 1 < n_poses; ++i) {
        for (size_t j = i + 1; j < n_poses; ++j) {
            double dist = d(i, j);
            if (dist > best) {
                best = dist;
                bi = i;
                bj = j;
            }
        }
    }
    return {bi, bj};
}

std::pair<std::vector<size_t>, std::vector<size_t>> bipartition(size_t n_poses, size_t i, size_t j,
                                                                const DistanceFn& d) {
    if (i == j || i >= n_poses || j >= n_poses) {
        throw std::invalid_argument("bipartition: seed indices must be distinct and in range");
    }
    std::vector<size_t> g1, g2;
    for (size_t p = 0; p < n_poses; ++p) {
        if (d(p, i) <= d(p, j)) {
            g1.push_back(p);
        } else {
            g2.push_back(p);
        }
    }
    return {g1, g2};
}

std::vector<size_t> fps_select(const std::vector<size_t>& group, size_t seed_index, size_t k,
                               const DistanceFn& d) {
    if (k < 1) throw std::invalid_argument("fps_select: K must be at least 1");
    if (std::find(group.begin(), group.end(), seed_index) == group.end()) {
        throw std::invalid_argument("fps_select: seed " + std::to_string(seed_index) + " not in group");
    }
    std::vector<size_t> selected = {seed_index};
    // min-distance of each group member to the selection so far
    std::vector<double> min_dist(group.size());
    for (size_t gi = 0; gi < group.size(); ++gi) min_dist[gi] = d(group[gi], seed_index);

    size_t target = std::min(k, group.size());
    while (selected.size() < target) {
        double best = -1.0;
        size_t best_gi = group.size();
        for (size_t gi = 0; gi < group.size(); ++gi) {
            if (std::find(selected.begin(), selected.end(), group[gi]) != selected.end()) continue;
            if (min_dist[gi] > best) {
                best = min_dist[gi];
                best_gi = gi;
            }
        }
        size_t next = group[best_gi];
        selected.push_back(next);
        for (size_t gi = 0; gi < group.size(); ++gi) min_dist[gi] = std::min(min_dist[gi], d(group[gi], next));
    }
    return selected;
}

CurationResult curate(const std::vector<geo::CameraPose>& poses, size_t k, DistanceKind kind) {
    if (poses.size() < 2) throw std::invalid_argument("curate: need at least 2 poses");
    if (k < 1) throw std::invalid_argument("curate: K must be at least 1");
    DistanceFn d = make_distance(poses, kind);
    CurationResult r;
    r.seeds = farthest_pair(poses.size(), d);
    std::tie(r.group1, r.group2) = bipartition(poses.size(), r.seeds.first, r.seeds.second, d);
    r.selected1 = fps_select(r.group1, r.seeds.first, k, d);
    r.selected2 = fps_select(r.group2, r.seeds.second, k, d);
    return r;
}

std::string curation_to_json(const CurationResult& r) {
    nlohmann::json j;
    j["seeds"] = {r.seeds.first, r.seeds.second};
    j["group1"] = r.group1;
    j["group2"] = r.group2;
    j["selected1"] = r.selected1;
    j["selected2"] = r.selected2;
    return j.dump(2);
}

}  // namespace sfl::cams
