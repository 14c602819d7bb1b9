#include "patch_actor/geometry.hpp"

#include "patch_actor/errors.hpp"

#include <algorithm>
#include <cmath>

namespace patch_actor {

bool operator==(const PatchGrid& a, const PatchGrid& b) {
    return a.cols == b.cols && a.rows == b.rows && a.patch_px == b.patch_px &&
           a.image_w_px == b.image_w_px && a.image_h_px == b.image_h_px;
}

PatchGrid make_grid(int image_w_px, int image_h_px, int patch_px) {
    if (image_w_px <= 0 || image_h_px <= 0 || patch_px <= 0) {
        throw InvalidArgument("make_grid: dimensions must be positive");
    }
    PatchGrid grid;
    grid.patch_px = patch_px;
    grid.image_w_px = image_w_px;
    grid.image_h_px = image_h_px;
    grid.cols = (image_w_px + patch_px - 1) / patch_px;
    grid.rows = (image_h_px + patch_px - 1) / patch_px;
    return grid;
}

namespace {

// Left edge maps with floor, right edge with ceil, so any box overlapping a
// patch by even a sliver marks it. Returns [lo, hi) in patch units.
void axis_span(Scalar lo_norm, Scalar hi_norm, int n, int& lo, int& hi) {
    lo = static_cast<int>(std::floor(lo_norm * n));
    hi = static_cast<int>(std::ceil(hi_norm * n));
    if (hi <= lo) hi = lo + 1; // degenerate (point) axis: take one patch
    lo = std::clamp(lo, 0, n - 1);
    hi = std::clamp(hi, lo + 1, n);
}

} // namespace

PatchMask rasterize_bbox(const NormBBox& bbox, const PatchGrid& grid) {
    if (grid.cols <= 0 || grid.rows <= 0) {
        throw InvalidArgument("rasterize_bbox: empty grid");
    }
    if (!(bbox.left <= bbox.right) || !(bbox.top <= bbox.bottom)) {
        throw InvalidArgument("rasterize_bbox: inverted bbox");
    }
    if (bbox.left < 0.0 || bbox.top < 0.0 || bbox.right > 1.0 || bbox.bottom > 1.0) {
        throw InvalidArgument("rasterize_bbox: bbox outside [0,1]");
    }

    int c_lo = 0, c_hi = 0, r_lo = 0, r_hi = 0;
    axis_span(bbox.left, bbox.right, grid.cols, c_lo, c_hi);
    axis_span(bbox.top, bbox.bottom, grid.rows, r_lo, r_hi);

    PatchMask mask;
    mask.grid = grid;
    mask.bits = BoolArray::Constant(grid.patch_count(), false);
    for (int r = r_lo; r < r_hi; ++r) {
        for (int c = c_lo; c < c_hi; ++c) {
            mask.bits[grid.index(c, r)] = true;
        }
    }
    return mask;
}

TargetDistribution target_from_mask(const PatchMask& mask, Scalar epsilon) {
    const int m = mask.popcount();
    if (m == 0) {
        throw EmptySupervision("target_from_mask: mask has no positive patch");
    }
    if (epsilon < 0.0) {
        throw InvalidArgument("target_from_mask: negative epsilon");
    }
    TargetDistribution target;
    target.grid = mask.grid;
    target.epsilon = epsilon;
    target.probs = Vector::Zero(mask.grid.patch_count());
    const Scalar p = 1.0 / (static_cast<Scalar>(m) + epsilon);
    for (int i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) target.probs[i] = p;
    }
    return target;
}

PixelPoint patch_center_px(int index, const PatchGrid& grid) {
    if (index < 0 || index >= grid.patch_count()) {
        throw InvalidArgument("patch_center_px: index out of range");
    }
    const Scalar half = grid.patch_px / 2.0;
    PixelPoint p;
    p.x = std::min(grid.col_of(index) * grid.patch_px + half,
                   static_cast<Scalar>(grid.image_w_px) - 1.0);
    p.y = std::min(grid.row_of(index) * grid.patch_px + half,
                   static_cast<Scalar>(grid.image_h_px) - 1.0);
    return p;
}

bool point_in_bbox(const PixelPoint& point, const NormBBox& bbox, int image_w_px, int image_h_px) {
    if (image_w_px <= 0 || image_h_px <= 0) {
        throw InvalidArgument("point_in_bbox: image dims must be positive");
    }
    const Scalar nx = point.x / image_w_px;
    const Scalar ny = point.y / image_h_px;
    return nx >= bbox.left && nx <= bbox.right && ny >= bbox.top && ny <= bbox.bottom;
}

std::vector<int> mask_indices(const PatchMask& mask) {
    std::vector<int> out;
    out.reserve(mask.popcount());
    for (int i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) out.push_back(i);
    }
    return out;
}

} // namespace patch_actor
