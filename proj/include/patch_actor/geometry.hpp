#pragma once

#include "patch_actor/types.hpp"

#include <vector>

namespace patch_actor {

/// Regular patch grid laid over an image, row-major, origin top-left.
/// Grid dims are the ceiling division of pixel dims by the patch size, so
/// trailing partial patches are legal and every pixel is addressable.
struct PatchGrid {
    int cols = 0;       // W: patches per row
    int rows = 0;       // H: patches per column
    int patch_px = 0;   // patch edge length in pixels
    int image_w_px = 0;
    int image_h_px = 0;

    int patch_count() const { return cols * rows; }
    int index(int col, int row) const { return row * cols + col; }
    int col_of(int index) const { return index % cols; }
    int row_of(int index) const { return index / cols; }
};

bool operator==(const PatchGrid& a, const PatchGrid& b);

/// Normalized bounding box in [0,1]^4 image coordinates.
struct NormBBox {
    Scalar left = 0.0;
    Scalar top = 0.0;
    Scalar right = 0.0;
    Scalar bottom = 0.0;
};

/// Binary per-patch mask over a grid, row-major.
struct PatchMask {
    PatchGrid grid;
    BoolArray bits;

    int popcount() const { return static_cast<int>(bits.count()); }
};

/// Supervision target p_i = y_i / (popcount + epsilon). Sums slightly
/// below one because of the epsilon in the denominator.
struct TargetDistribution {
    PatchGrid grid;
    Vector probs;
    Scalar epsilon = 0.0;
};

constexpr Scalar kDefaultTargetEpsilon = 1e-6;

PatchGrid make_grid(int image_w_px, int image_h_px, int patch_px);

/// Marks every patch partially or fully covered by the box: column c is set
/// iff floor(left*W) <= c < ceil(right*W), rows likewise, clamped to the
/// grid. A degenerate axis (left == right) expands to the single patch
/// containing the point so point annotations still yield one positive.
PatchMask rasterize_bbox(const NormBBox& bbox, const PatchGrid& grid);

/// Throws EmptySupervision when the mask has no positive patch.
TargetDistribution target_from_mask(const PatchMask& mask, Scalar epsilon = kDefaultTargetEpsilon);

/// Pixel center of a patch, clamped into the image for edge patches that
/// extend past it.
PixelPoint patch_center_px(int index, const PatchGrid& grid);

/// Inclusive point-in-box test in normalized coordinates.
bool point_in_bbox(const PixelPoint& point, const NormBBox& bbox, int image_w_px, int image_h_px);

/// Indices of the set bits, row-major order.
std::vector<int> mask_indices(const PatchMask& mask);

} // namespace patch_actor
