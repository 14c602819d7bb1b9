#include "patch_actor/candidates.hpp"

#include "patch_actor/errors.hpp"

#include <algorithm>
#include <cmath>

namespace patch_actor {

const char* to_string(CandidateSource source) {
    return source == CandidateSource::patch ? "patch" : "cluster_center";
}

std::vector<int> pool_patches(const AttentionMap& map, const SelectionConfig& cfg) {
    if (cfg.max_pool < 1) throw InvalidArgument("pool_patches: max_pool must be >= 1");
    if (cfg.rel_filter < 0.0 || cfg.rel_filter > 1.0) {
        throw InvalidArgument("pool_patches: rel_filter outside [0,1]");
    }
    if (map.weights.size() != map.grid.patch_count() || map.weights.size() == 0) {
        throw InvalidArgument("pool_patches: map does not match its grid");
    }

    const Scalar cutoff = cfg.rel_filter * map.weights.maxCoeff();
    std::vector<int> kept;
    for (int i = 0; i < map.weights.size(); ++i) {
        if (map.weights[i] >= cutoff) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end(), [&](int a, int b) {
        if (map.weights[a] != map.weights[b]) return map.weights[a] > map.weights[b];
        return a < b;
    });
    if (static_cast<int>(kept.size()) > cfg.max_pool) kept.resize(cfg.max_pool);
    return kept;
}

std::vector<std::vector<int>> cluster(const std::vector<int>& indices, const PatchGrid& grid) {
    std::vector<char> pooled(grid.patch_count(), 0);
    for (int i : indices) {
        if (i < 0 || i >= grid.patch_count()) throw InvalidArgument("cluster: index out of grid");
        pooled[i] = 1;
    }

    std::vector<char> seen(grid.patch_count(), 0);
    std::vector<std::vector<int>> clusters;
    for (int seed : indices) { // seeds in pool (weight) order
        if (seen[seed]) continue;
        std::vector<int> component;
        std::vector<int> stack{seed};
        seen[seed] = 1;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            component.push_back(cur);
            const int c = grid.col_of(cur), r = grid.row_of(cur);
            const int neighbors[4] = {
                c > 0 ? grid.index(c - 1, r) : -1,
                c + 1 < grid.cols ? grid.index(c + 1, r) : -1,
                r > 0 ? grid.index(c, r - 1) : -1,
                r + 1 < grid.rows ? grid.index(c, r + 1) : -1,
            };
            for (int nb : neighbors) {
                if (nb >= 0 && pooled[nb] && !seen[nb]) {
                    seen[nb] = 1;
                    stack.push_back(nb);
                }
            }
        }
        clusters.push_back(std::move(component));
    }
    return clusters;
}

CandidatePoint weighted_center(const std::vector<int>& cluster_indices, const AttentionMap& map) {
    if (cluster_indices.empty()) throw InvalidArgument("weighted_center: empty cluster");
    Scalar total = 0.0, x = 0.0, y = 0.0;
    Scalar lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (int i : cluster_indices) {
        const Scalar w = map.weights[i];
        const PixelPoint c = patch_center_px(i, map.grid);
        total += w;
        x += w * c.x;
        y += w * c.y;
        lo_x = std::min(lo_x, c.x);
        hi_x = std::max(hi_x, c.x);
        lo_y = std::min(lo_y, c.y);
        hi_y = std::max(hi_y, c.y);
    }
    if (total <= 0.0) throw InvalidArgument("weighted_center: nonpositive cluster mass");
    // The exact mean lies inside the members' bounding rectangle; clamping
    // removes the last-ulp drift of the floating-point quotient.
    const PixelPoint p{std::clamp(x / total, lo_x, hi_x), std::clamp(y / total, lo_y, hi_y)};
    return {p, total, CandidateSource::cluster_center};
}

CandidateSet build_candidates(const AttentionMap& map, const SelectionConfig& cfg) {
    const std::vector<int> pooled = pool_patches(map, cfg);

    std::vector<CandidatePoint> all;
    all.reserve(pooled.size() * 2);
    for (int i : pooled) {
        all.push_back({patch_center_px(i, map.grid), map.weights[i], CandidateSource::patch});
    }
    for (const auto& component : cluster(pooled, map.grid)) {
        all.push_back(weighted_center(component, map));
    }

    // Stable: equal weights keep construction order (patch points first),
    // which pins tie-breaking and therefore output bytes.
    std::stable_sort(all.begin(), all.end(),
                     [](const CandidatePoint& a, const CandidatePoint& b) { return a.weight > b.weight; });

    CandidateSet set;
    set.grid = map.grid;
    for (const CandidatePoint& cand : all) {
        bool duplicate = false;
        for (const CandidatePoint& kept : set.candidates) {
            const Scalar dx = cand.point_px.x - kept.point_px.x;
            const Scalar dy = cand.point_px.y - kept.point_px.y;
            if (dx * dx + dy * dy <= 1.0) { // within one pixel: keep the heavier, already kept
                duplicate = true;
                break;
            }
        }
        if (!duplicate) set.candidates.push_back(cand);
    }
    return set;
}

} // namespace patch_actor
