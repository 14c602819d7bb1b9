#include <doctest.h>

#include "patch_actor/errors.hpp"
#include "patch_actor/geometry.hpp"
#include "patch_actor/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace patch_actor;

namespace {

// Brute-force reference: paint the box onto the pixel raster, then mark every
// patch that owns a painted pixel. Works in pixel units so it shares no code
// (and no grid-unit arithmetic) with rasterize_bbox. Exact for grids whose
// image dims are multiples of patch_px.
std::vector<int> oracle_axis_patches(Scalar lo_norm, Scalar hi_norm, int n_patches, int patch_px) {
    const int n_px = n_patches * patch_px;
    std::set<int> patches;
    for (int px = 0; px < n_px; ++px) {
        if (px < hi_norm * n_px && px + 1 > lo_norm * n_px) {
            patches.insert(px / patch_px);
        }
    }
    if (patches.empty()) {
        // Zero-measure axis landing exactly on a pixel boundary: take the
        // pixel containing the point.
        int px = std::min(static_cast<int>(std::floor(lo_norm * n_px)), n_px - 1);
        px = std::max(px, 0);
        patches.insert(px / patch_px);
    }
    return {patches.begin(), patches.end()};
}

std::set<int> oracle_mask(const NormBBox& bbox, const PatchGrid& grid) {
    const auto cols = oracle_axis_patches(bbox.left, bbox.right, grid.cols, grid.patch_px);
    const auto rows = oracle_axis_patches(bbox.top, bbox.bottom, grid.rows, grid.patch_px);
    std::set<int> out;
    for (int r : rows) {
        for (int c : cols) out.insert(grid.index(c, r));
    }
    return out;
}

std::set<int> mask_as_set(const PatchMask& mask) {
    const auto v = mask_indices(mask);
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("make_grid uses ceiling division and keeps pixel dims") {
    const PatchGrid g = make_grid(448, 336, 28);
    CHECK(g.cols == 16);
    CHECK(g.rows == 12);
    CHECK(g.patch_count() == 192);
    CHECK(g.image_w_px == 448);
    CHECK(g.image_h_px == 336);

    const PatchGrid partial = make_grid(450, 337, 28);
    CHECK(partial.cols == 17);
    CHECK(partial.rows == 13);

    CHECK_THROWS_AS(make_grid(0, 336, 28), InvalidArgument);
    CHECK_THROWS_AS(make_grid(448, -1, 28), InvalidArgument);
    CHECK_THROWS_AS(make_grid(448, 336, 0), InvalidArgument);
}

TEST_CASE("grid index helpers are a row-major bijection") {
    const PatchGrid g = make_grid(448, 336, 28);
    int next = 0;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            const int i = g.index(c, r);
            CHECK(i == next++);
            CHECK(g.col_of(i) == c);
            CHECK(g.row_of(i) == r);
        }
    }
}

TEST_CASE("rasterize_bbox marks every partially covered patch") {
    const PatchGrid g = make_grid(100, 100, 10); // 10x10 patches
    const PatchMask mask = rasterize_bbox({0.1, 0.1, 0.3, 0.3}, g);

    // floor(0.1*10)=1, ceil(0.3*10)=3 on both axes -> cols {1,2} x rows {1,2}.
    const std::set<int> expect = {g.index(1, 1), g.index(2, 1), g.index(1, 2), g.index(2, 2)};
    CHECK(mask_as_set(mask) == expect);
    CHECK(mask.popcount() == 4);
}

TEST_CASE("degenerate point bbox expands to the single containing patch") {
    const PatchGrid g = make_grid(100, 100, 10);
    const PatchMask mask = rasterize_bbox({0.25, 0.5, 0.25, 0.5}, g);
    CHECK(mask.popcount() == 1);
    CHECK(mask_indices(mask) == std::vector<int>{g.index(2, 5)});
}

TEST_CASE("full-image bbox covers every patch, corner points clamp") {
    const PatchGrid g = make_grid(448, 336, 28);
    CHECK(rasterize_bbox({0.0, 0.0, 1.0, 1.0}, g).popcount() == g.patch_count());

    const PatchMask origin = rasterize_bbox({0.0, 0.0, 0.0, 0.0}, g);
    CHECK(mask_indices(origin) == std::vector<int>{0});

    const PatchMask far = rasterize_bbox({1.0, 1.0, 1.0, 1.0}, g);
    CHECK(mask_indices(far) == std::vector<int>{g.patch_count() - 1});
}

TEST_CASE("rasterize_bbox rejects malformed boxes") {
    const PatchGrid g = make_grid(100, 100, 10);
    CHECK_THROWS_AS(rasterize_bbox({0.5, 0.1, 0.4, 0.3}, g), InvalidArgument);
    CHECK_THROWS_AS(rasterize_bbox({0.1, 0.5, 0.3, 0.4}, g), InvalidArgument);
    CHECK_THROWS_AS(rasterize_bbox({-0.1, 0.0, 0.5, 0.5}, g), InvalidArgument);
    CHECK_THROWS_AS(rasterize_bbox({0.0, 0.0, 1.1, 0.5}, g), InvalidArgument);
}

TEST_CASE("rasterize_bbox matches the pixel-raster oracle on random cases") {
    Rng rng(20260825);
    for (int trial = 0; trial < 1000; ++trial) {
        const int ppx = rng.uniform_int(1, 16);
        const int cols = rng.uniform_int(1, 24);
        const int rows = rng.uniform_int(1, 24);
        const PatchGrid g = make_grid(cols * ppx, rows * ppx, ppx);

        NormBBox box;
        if (trial % 5 == 0) {
            // Point annotation.
            box.left = box.right = rng.uniform();
            box.top = box.bottom = rng.uniform();
        } else {
            Scalar x0 = rng.uniform(), x1 = rng.uniform();
            Scalar y0 = rng.uniform(), y1 = rng.uniform();
            if (x1 < x0) std::swap(x0, x1);
            if (y1 < y0) std::swap(y0, y1);
            box = {x0, y0, x1, y1};
        }

        CAPTURE(trial);
        CAPTURE(cols);
        CAPTURE(rows);
        CAPTURE(ppx);
        REQUIRE(mask_as_set(rasterize_bbox(box, g)) == oracle_mask(box, g));
    }
}

TEST_CASE("target_from_mask spreads mass uniformly with epsilon shrinkage") {
    const PatchGrid g = make_grid(100, 100, 10);
    const PatchMask mask = rasterize_bbox({0.1, 0.1, 0.3, 0.3}, g);
    const TargetDistribution t = target_from_mask(mask, 1e-6);

    const int m = mask.popcount();
    REQUIRE(t.probs.size() == g.patch_count());
    for (int i : mask_indices(mask)) {
        CHECK(t.probs[i] == doctest::Approx(1.0 / (m + 1e-6)).epsilon(1e-12));
    }
    CHECK(t.probs.sum() == doctest::Approx(m / (m + 1e-6)).epsilon(1e-12));
    CHECK(t.probs.minCoeff() == 0.0);
}

TEST_CASE("target_from_mask rejects empty masks and bad epsilon") {
    PatchMask empty;
    empty.grid = make_grid(100, 100, 10);
    empty.bits = BoolArray::Constant(empty.grid.patch_count(), false);
    CHECK_THROWS_AS(target_from_mask(empty), EmptySupervision);

    const PatchMask ok = rasterize_bbox({0.1, 0.1, 0.3, 0.3}, empty.grid);
    CHECK_THROWS_AS(target_from_mask(ok, -1.0), InvalidArgument);
}

TEST_CASE("patch_center_px returns clamped in-image centers") {
    const PatchGrid g = make_grid(448, 336, 28);
    const PixelPoint c0 = patch_center_px(0, g);
    CHECK(c0.x == doctest::Approx(14.0));
    CHECK(c0.y == doctest::Approx(14.0));

    const PixelPoint last = patch_center_px(g.patch_count() - 1, g);
    CHECK(last.x == doctest::Approx(434.0));
    CHECK(last.y == doctest::Approx(322.0));

    // Partial trailing patch: its nominal center lies outside the image and
    // must clamp to the last pixel.
    const PatchGrid partial = make_grid(450, 336, 28); // col 16 spans [448, 476)
    const PixelPoint edge = patch_center_px(partial.index(16, 0), partial);
    CHECK(edge.x == doctest::Approx(449.0));
    CHECK(edge.y == doctest::Approx(14.0));

    CHECK_THROWS_AS(patch_center_px(-1, g), InvalidArgument);
    CHECK_THROWS_AS(patch_center_px(g.patch_count(), g), InvalidArgument);
}

TEST_CASE("patch centers land inside their own patch") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int ppx = rng.uniform_int(1, 32);
        const PatchGrid g = make_grid(rng.uniform_int(1, 600), rng.uniform_int(1, 600), ppx);
        const int idx = rng.uniform_int(0, g.patch_count() - 1);
        const PixelPoint c = patch_center_px(idx, g);
        CHECK(c.x >= 0.0);
        CHECK(c.y >= 0.0);
        CHECK(c.x <= g.image_w_px - 1.0);
        CHECK(c.y <= g.image_h_px - 1.0);
        CHECK(static_cast<int>(c.x) / ppx == g.col_of(idx));
        CHECK(static_cast<int>(c.y) / ppx == g.row_of(idx));
    }
}

TEST_CASE("point_in_bbox is inclusive at the boundary") {
    const NormBBox box{0.25, 0.25, 0.75, 0.75};
    CHECK(point_in_bbox({50.0, 50.0}, box, 100, 100));
    CHECK(point_in_bbox({25.0, 25.0}, box, 100, 100));
    CHECK(point_in_bbox({75.0, 75.0}, box, 100, 100));
    CHECK(point_in_bbox({75.0, 25.0}, box, 100, 100));
    CHECK_FALSE(point_in_bbox({24.999, 50.0}, box, 100, 100));
    CHECK_FALSE(point_in_bbox({50.0, 75.001}, box, 100, 100));
    CHECK_THROWS_AS(point_in_bbox({0.0, 0.0}, box, 0, 100), InvalidArgument);
}

TEST_CASE("rasterized patch centers are consistent targets for point_in_bbox") {
    // For boxes at least one patch wide in both axes, the center of an
    // interior covered patch must itself hit the box inclusively.
    const PatchGrid g = make_grid(448, 336, 28);
    const NormBBox box{0.2, 0.3, 0.6, 0.8};
    const PatchMask mask = rasterize_bbox(box, g);
    int inside = 0;
    for (int i : mask_indices(mask)) {
        if (point_in_bbox(patch_center_px(i, g), box, g.image_w_px, g.image_h_px)) ++inside;
    }
    // Edge patches may be only sliver-covered, ergo centers outside; interior
    // ones cannot. The box spans 6.4 patch widths, so at least a 4x4 interior.
    CHECK(inside >= 16);
}
