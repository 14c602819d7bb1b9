#include "patch_actor/visualize.hpp"

#include "patch_actor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace patch_actor {

namespace {

std::uint8_t blend_channel(Scalar alpha, std::uint8_t base, std::uint8_t over) {
    const Scalar mixed = (1.0 - alpha) * static_cast<Scalar>(base) +
                         alpha * static_cast<Scalar>(over);
    const Scalar rounded = std::floor(mixed + 0.5);
    return static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
}

void check_image(const ImageRgb& image, const char* what) {
    if (image.width < 1 || image.height < 1) {
        throw InvalidArgument(std::string(what) + ": non-positive dimensions");
    }
    const std::size_t expected =
        3u * static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height);
    if (image.pixels.size() != expected) {
        throw InvalidArgument(std::string(what) + ": pixel buffer size does not match dims");
    }
}

} // namespace

bool operator==(Rgb a, Rgb b) { return a.r == b.r && a.g == b.g && a.b == b.b; }
bool operator!=(Rgb a, Rgb b) { return !(a == b); }

ImageRgb ImageRgb::filled(int width, int height, Rgb color) {
    if (width < 1 || height < 1) throw InvalidArgument("ImageRgb: non-positive dimensions");
    ImageRgb image;
    image.width = width;
    image.height = height;
    image.pixels.resize(3u * static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
        image.pixels[i] = color.r;
        image.pixels[i + 1] = color.g;
        image.pixels[i + 2] = color.b;
    }
    return image;
}

Rgb ImageRgb::get(int x, int y) const {
    const std::size_t at = 3u * (static_cast<std::size_t>(y) * width + x);
    return {pixels[at], pixels[at + 1], pixels[at + 2]};
}

void ImageRgb::set(int x, int y, Rgb color) {
    const std::size_t at = 3u * (static_cast<std::size_t>(y) * width + x);
    pixels[at] = color.r;
    pixels[at + 1] = color.g;
    pixels[at + 2] = color.b;
}

bool operator==(const ImageRgb& a, const ImageRgb& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

Vector normalize_map(const Vector& weights) {
    if (weights.size() == 0) throw InvalidArgument("normalize_map: empty weights");
    if (!weights.allFinite()) throw InvalidArgument("normalize_map: non-finite weights");
    const Scalar lo = weights.minCoeff();
    const Scalar hi = weights.maxCoeff();
    if (hi == lo) return Vector::Zero(weights.size());
    return ((weights.array() - lo) / (hi - lo)).matrix();
}

const std::array<Rgb, 256>& jet_table() {
    static const std::array<Rgb, 256> table = [] {
        std::array<Rgb, 256> t{};
        for (int i = 0; i < 256; ++i) {
            const Scalar x = static_cast<Scalar>(i) / 255.0;
            const auto channel = [](Scalar v) {
                const Scalar c = std::clamp(v, 0.0, 1.0);
                return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
            };
            t[i].r = channel(1.5 - std::abs(4.0 * x - 3.0));
            t[i].g = channel(1.5 - std::abs(4.0 * x - 2.0));
            t[i].b = channel(1.5 - std::abs(4.0 * x - 1.0));
        }
        return t;
    }();
    return table;
}

Rgb jet_color(Scalar v) {
    const Scalar c = std::clamp(v, 0.0, 1.0);
    const int idx = static_cast<int>(std::lround(c * 255.0));
    return jet_table()[static_cast<std::size_t>(idx)];
}

Scalar sample_nearest(const Vector& values, const PatchGrid& grid, Scalar x, Scalar y) {
    const int col = std::clamp(static_cast<int>(std::floor(x / grid.patch_px)), 0, grid.cols - 1);
    const int row = std::clamp(static_cast<int>(std::floor(y / grid.patch_px)), 0, grid.rows - 1);
    return values[grid.index(col, row)];
}

Scalar sample_bilinear(const Vector& values, const PatchGrid& grid, Scalar x, Scalar y) {
    // Patch c's nominal center sits at image coordinate (c + 0.5) * patch_px,
    // so gx == c exactly there and the lerp weight vanishes.
    const Scalar gx = std::clamp(x / grid.patch_px - 0.5, 0.0, static_cast<Scalar>(grid.cols - 1));
    const Scalar gy = std::clamp(y / grid.patch_px - 0.5, 0.0, static_cast<Scalar>(grid.rows - 1));
    const int c0 = std::min(static_cast<int>(std::floor(gx)), grid.cols - 1);
    const int r0 = std::min(static_cast<int>(std::floor(gy)), grid.rows - 1);
    const int c1 = std::min(c0 + 1, grid.cols - 1);
    const int r1 = std::min(r0 + 1, grid.rows - 1);
    const Scalar tx = gx - c0;
    const Scalar ty = gy - r0;
    const Scalar v00 = values[grid.index(c0, r0)];
    const Scalar v10 = values[grid.index(c1, r0)];
    const Scalar v01 = values[grid.index(c0, r1)];
    const Scalar v11 = values[grid.index(c1, r1)];
    const Scalar top = v00 + tx * (v10 - v00);
    const Scalar bot = v01 + tx * (v11 - v01);
    return top + ty * (bot - top);
}

ImageRgb render_overlay(const ImageRgb& base, const AttentionMap& map, const OverlayConfig& cfg) {
    check_image(base, "render_overlay");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0 || !std::isfinite(cfg.alpha)) {
        throw InvalidArgument("render_overlay: alpha must lie in [0, 1]");
    }
    if (map.weights.size() != map.grid.patch_count()) {
        throw InvalidArgument("render_overlay: weight count does not match the grid");
    }
    if (base.width != map.grid.image_w_px || base.height != map.grid.image_h_px) {
        throw InvalidArgument("render_overlay: base image dims do not match the grid's image");
    }
    const Vector norm = normalize_map(map.weights);
    ImageRgb out = base;
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            const Scalar sx = x + 0.5;
            const Scalar sy = y + 0.5;
            const Scalar v = cfg.resample == Resample::nearest
                                 ? sample_nearest(norm, map.grid, sx, sy)
                                 : sample_bilinear(norm, map.grid, sx, sy);
            const Rgb heat = jet_color(v);
            const Rgb b = base.get(x, y);
            out.set(x, y, {blend_channel(cfg.alpha, b.r, heat.r),
                           blend_channel(cfg.alpha, b.g, heat.g),
                           blend_channel(cfg.alpha, b.b, heat.b)});
        }
    }
    return out;
}

Rgb class_color(int class_id) {
    static const std::array<Rgb, 8> palette = {{{204, 64, 64},
                                                {64, 204, 64},
                                                {80, 96, 224},
                                                {212, 196, 64},
                                                {200, 72, 200},
                                                {72, 200, 200},
                                                {232, 148, 48},
                                                {168, 168, 168}}};
    const int wrapped = ((class_id % 8) + 8) % 8;
    return palette[static_cast<std::size_t>(wrapped)];
}

ImageRgb render_screen(const SynthScreen& screen) {
    const int w = screen.grid.image_w_px;
    const int h = screen.grid.image_h_px;
    ImageRgb image = ImageRgb::filled(w, h, {32, 32, 32});
    // Elements are patch-aligned, so the picture is the patch-class grid at
    // pixel resolution — the same rasterization that builds training masks,
    // immune to the rounding of re-deriving pixel spans from the boxes.
    const std::vector<int> classes = patch_classes(screen);
    for (int y = 0; y < h; ++y) {
        const int row = y / screen.grid.patch_px;
        for (int x = 0; x < w; ++x) {
            const int cls = classes[screen.grid.index(x / screen.grid.patch_px, row)];
            if (cls >= 0) image.set(x, y, class_color(cls));
        }
    }
    return image;
}

void write_ppm(const std::string& path, const ImageRgb& image) {
    check_image(image, "write_ppm");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw FileError("write failed: " + path);
}

ImageRgb read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open for reading: " + path);
    std::string magic;
    in >> magic;
    if (!in) throw SchemaError(path + ": empty file");
    if (magic != "P6") throw UnsupportedVersion(path + ": magic '" + magic + "', expected P6");
    int width = 0, height = 0, maxval = 0;
    in >> width >> height >> maxval;
    if (!in || width < 1 || height < 1) throw SchemaError(path + ": malformed header");
    if (maxval != 255) {
        throw UnsupportedVersion(path + ": maxval " + std::to_string(maxval) + ", expected 255");
    }
    in.get(); // the single whitespace byte after the header
    ImageRgb image;
    image.width = width;
    image.height = height;
    image.pixels.resize(3u * static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    in.read(reinterpret_cast<char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
        throw SchemaError(path + ": truncated pixel data");
    }
    return image;
}

} // namespace patch_actor
