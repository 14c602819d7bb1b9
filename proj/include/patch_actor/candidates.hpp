#pragma once

#include "patch_actor/actionhead.hpp"
#include "patch_actor/geometry.hpp"
#include "patch_actor/types.hpp"

#include <string>
#include <vector>

namespace patch_actor {

/// Candidate extraction and verifier-selection knobs.
struct SelectionConfig {
    int max_pool = 20;          // candidate cap from the attention map
    Scalar rel_filter = 0.2;    // drop patches below this fraction of the max
    Scalar gamma = 0.95;        // early-exit score threshold
    int crop_px = 1000;         // square crop side handed to the scorer
    std::vector<int> agg_crops = {1200, 1400}; // multi-scale crop sides
    bool use_aggregation = false;
};

enum class CandidateSource { patch, cluster_center };

/// A proposed click point with the attention mass backing it.
struct CandidatePoint {
    PixelPoint point_px;
    Scalar weight = 0.0;
    CandidateSource source = CandidateSource::patch;
};

struct CandidateSet {
    std::vector<CandidatePoint> candidates; // weight-descending
    PatchGrid grid;
};

const char* to_string(CandidateSource source);

/// Patch indices with weight >= rel_filter * max(weight), capped at
/// max_pool, ordered by weight descending with index ties going first.
std::vector<int> pool_patches(const AttentionMap& map, const SelectionConfig& cfg);

/// Splits pooled indices into maximal 4-connected components (edges only,
/// no diagonals). Clusters are listed in first-seen pool order.
std::vector<std::vector<int>> cluster(const std::vector<int>& indices, const PatchGrid& grid);

/// Attention-weighted mean of the cluster's patch centers; the candidate
/// weight is the cluster's total attention mass.
CandidatePoint weighted_center(const std::vector<int>& cluster_indices, const AttentionMap& map);

/// Pooled patch centers plus cluster weighted-centers, deduplicated at one
/// pixel (larger weight wins), sorted by weight descending.
CandidateSet build_candidates(const AttentionMap& map, const SelectionConfig& cfg);

} // namespace patch_actor
