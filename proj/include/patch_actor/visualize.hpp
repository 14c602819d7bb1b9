#pragma once

#include "patch_actor/actionhead.hpp"
#include "patch_actor/geometry.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace patch_actor {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
};

bool operator==(Rgb a, Rgb b);
bool operator!=(Rgb a, Rgb b);

/// 8-bit RGB raster, row-major from the top-left pixel.
struct ImageRgb {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // 3 bytes per pixel

    static ImageRgb filled(int width, int height, Rgb color);
    Rgb get(int x, int y) const;
    void set(int x, int y, Rgb color);
};

bool operator==(const ImageRgb& a, const ImageRgb& b);

enum class Resample { nearest, bilinear };

/// Overlay rendering knobs. alpha = 0 reproduces the base image exactly;
/// alpha = 1 paints the pure heatmap.
struct OverlayConfig {
    Scalar alpha = 0.3;
    Resample resample = Resample::bilinear;
};

/// (w - min) / (max - min). A constant map has no range to stretch and
/// normalizes to all zeros.
Vector normalize_map(const Vector& weights);

/// 256-entry RGB lookup built from the piecewise-linear jet ramp
///   r = clamp(1.5 - |4x - 3|), g = clamp(1.5 - |4x - 2|),
///   b = clamp(1.5 - |4x - 1|),  x = i / 255,
/// with each channel scaled to bytes and rounded half-up.
const std::array<Rgb, 256>& jet_table();

/// Nearest of the 256 jet entries for v clamped into [0, 1].
Rgb jet_color(Scalar v);

/// Continuous samplers over a per-patch value field; (x, y) are image
/// coordinates. nearest returns the containing patch's value; bilinear
/// interpolates between the four surrounding patch centers, reproducing
/// patch values exactly at the centers, and clamps outside them.
Scalar sample_nearest(const Vector& values, const PatchGrid& grid, Scalar x, Scalar y);
Scalar sample_bilinear(const Vector& values, const PatchGrid& grid, Scalar x, Scalar y);

/// Heatmap overlay: per pixel, (1 - alpha) * base + alpha * jet(upsampled
/// normalized weight), rounded half-up per channel. Output dims equal base
/// dims, which must match the map's grid; mismatches, a weight vector of
/// the wrong length, or alpha outside [0, 1] throw InvalidArgument.
ImageRgb render_overlay(const ImageRgb& base, const AttentionMap& map, const OverlayConfig& cfg);

/// Flat color assigned to a class id (8-color palette, wrapping).
Rgb class_color(int class_id);

/// Synthetic screenshot: flat-colored element rectangles over a dark gray
/// background. Elements are patch-aligned, so each pixel takes the color of
/// its patch's class (background pixels stay dark); the rectangles painted
/// are exactly the patch masks that supervise training.
ImageRgb render_screen(const SynthScreen& screen);

/// Binary PPM (P6, maxval 255). The reader accepts exactly the subset the
/// writer emits: no comment lines. Wrong magic or maxval throws
/// UnsupportedVersion, truncation or garbage SchemaError, unreadable paths
/// FileError.
void write_ppm(const std::string& path, const ImageRgb& image);
ImageRgb read_ppm(const std::string& path);

} // namespace patch_actor
