#include "patch_actor/synthgui.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

namespace patch_actor {

namespace {

// Stream tags keeping the placement, noise, and per-screen seed streams
// statistically independent even for adjacent base seeds.
constexpr std::uint64_t kStreamPlacement = 0x706c6163; // "plac"
constexpr std::uint64_t kStreamNoise = 0x6e6f6973;     // "nois"
constexpr std::uint64_t kStreamCounts = 0x636e7473;    // "cnts"
constexpr std::uint64_t kStreamScreens = 0x7363726e;   // "scrn"

struct PatchRect {
    int c0 = 0, r0 = 0, w = 0, h = 0;
};

bool rects_overlap(const PatchRect& a, const PatchRect& b) {
    return a.c0 < b.c0 + b.w && b.c0 < a.c0 + a.w && a.r0 < b.r0 + b.h && b.r0 < a.r0 + a.h;
}

bool overlaps_any(const PatchRect& r, const std::vector<PatchRect>& placed) {
    return std::any_of(placed.begin(), placed.end(),
                       [&](const PatchRect& p) { return rects_overlap(r, p); });
}

// Normalized box of a patch rect, inset half a pixel per side. The inset
// keeps floor/ceil rasterization away from exact patch boundaries, where
// floating-point rounding of left*cols could otherwise flip a patch.
NormBBox rect_to_bbox(const PatchRect& r, const PatchGrid& g) {
    NormBBox b;
    b.left = (r.c0 * g.patch_px + 0.5) / g.image_w_px;
    b.top = (r.r0 * g.patch_px + 0.5) / g.image_h_px;
    b.right = ((r.c0 + r.w) * g.patch_px - 0.5) / g.image_w_px;
    b.bottom = ((r.r0 + r.h) * g.patch_px - 0.5) / g.image_h_px;
    return b;
}

// Positions where a w x h rect shares at least one full patch edge with
// `prev`, in-bounds and not overlapping anything already placed.
std::vector<PatchRect> adjacent_positions(const PatchRect& prev, int w, int h,
                                          const PatchGrid& grid,
                                          const std::vector<PatchRect>& placed) {
    std::vector<PatchRect> out;
    auto consider = [&](int c, int r) {
        PatchRect cand{c, r, w, h};
        if (c < 0 || r < 0 || c + w > grid.cols || r + h > grid.rows) return;
        if (!overlaps_any(cand, placed)) out.push_back(cand);
    };
    for (int r = prev.r0 - h + 1; r <= prev.r0 + prev.h - 1; ++r) {
        consider(prev.c0 + prev.w, r); // right of prev
        consider(prev.c0 - w, r);      // left of prev
    }
    for (int c = prev.c0 - w + 1; c <= prev.c0 + prev.w - 1; ++c) {
        consider(c, prev.r0 + prev.h); // below prev
        consider(c, prev.r0 - h);      // above prev
    }
    return out;
}

} // namespace

EncoderParams init_encoder(int dim, int class_count, std::uint64_t seed) {
    if (dim < 1 || class_count < 1) {
        throw InvalidArgument("init_encoder: dim and class_count must be >= 1");
    }
    Rng rng(seed);
    const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(dim));
    auto draw = [&](int rows, int cols) {
        Matrix m(rows, cols);
        for (int c = 0; c < cols; ++c) {
            for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-0.5, 0.5) * scale;
        }
        return m;
    };
    EncoderParams enc;
    enc.class_emb = draw(dim, class_count);
    enc.background_emb = draw(dim, 1).col(0);
    enc.instr_emb = draw(dim, class_count);

    for (int a = 0; a < class_count; ++a) {
        if ((enc.class_emb.col(a) - enc.background_emb).norm() == 0.0) {
            throw NumericalError("init_encoder: class embedding collides with background");
        }
        for (int b = a + 1; b < class_count; ++b) {
            if ((enc.class_emb.col(a) - enc.class_emb.col(b)).norm() == 0.0 ||
                (enc.instr_emb.col(a) - enc.instr_emb.col(b)).norm() == 0.0) {
                throw NumericalError("init_encoder: embeddings not distinct");
            }
        }
    }
    return enc;
}

SynthScreen gen_screen(std::uint64_t seed, const PatchGrid& grid, int n_elements, int class_count,
                       const GenConfig& cfg) {
    if (n_elements < 1) throw InvalidArgument("gen_screen: n_elements must be >= 1");
    if (class_count < 1) throw InvalidArgument("gen_screen: class_count must be >= 1");
    if (n_elements > class_count) {
        // One class per element keeps instructions unambiguous.
        throw InvalidArgument("gen_screen: n_elements exceeds class vocabulary");
    }
    if (grid.image_w_px != grid.cols * grid.patch_px ||
        grid.image_h_px != grid.rows * grid.patch_px) {
        throw InvalidArgument("gen_screen: image dims must be whole multiples of patch_px");
    }
    if (cfg.min_elem_w < 1 || cfg.min_elem_h < 1 || cfg.max_elem_w < cfg.min_elem_w ||
        cfg.max_elem_h < cfg.min_elem_h || cfg.noise_scale < 0.0) {
        throw InvalidArgument("gen_screen: malformed GenConfig");
    }

    Rng rng(mix_seed(seed, kStreamPlacement));

    std::vector<int> classes(class_count);
    std::iota(classes.begin(), classes.end(), 0);
    rng.shuffle(classes.begin(), classes.end());

    std::vector<PatchRect> placed;
    for (int i = 0; i < n_elements; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
            const int w = static_cast<int>(
                rng.uniform_int(std::min(cfg.min_elem_w, grid.cols), std::min(cfg.max_elem_w, grid.cols)));
            const int h = static_cast<int>(
                rng.uniform_int(std::min(cfg.min_elem_h, grid.rows), std::min(cfg.max_elem_h, grid.rows)));
            if (cfg.adjacent_pairs && i % 2 == 1) {
                const auto spots = adjacent_positions(placed[i - 1], w, h, grid, placed);
                if (spots.empty()) continue;
                placed.push_back(spots[rng.uniform_int(0, static_cast<std::int64_t>(spots.size()) - 1)]);
                ok = true;
            } else {
                PatchRect cand{static_cast<int>(rng.uniform_int(0, grid.cols - w)),
                               static_cast<int>(rng.uniform_int(0, grid.rows - h)), w, h};
                if (!overlaps_any(cand, placed)) {
                    placed.push_back(cand);
                    ok = true;
                }
            }
        }
        if (!ok) throw GenerationFailed("gen_screen: could not place element after bounded retries");
    }

    SynthScreen screen;
    screen.seed = seed;
    screen.grid = grid;
    screen.background_noise_scale = cfg.noise_scale;
    screen.elements.reserve(n_elements);
    for (int i = 0; i < n_elements; ++i) {
        screen.elements.push_back({classes[i], rect_to_bbox(placed[i], grid)});
    }
    return screen;
}

std::vector<int> patch_classes(const SynthScreen& screen) {
    std::vector<int> classes(screen.grid.patch_count(), -1);
    for (const Element& e : screen.elements) {
        for (int idx : mask_indices(rasterize_bbox(e.bbox, screen.grid))) {
            if (classes[idx] != -1) {
                throw InvalidArgument("patch_classes: elements overlap at patch resolution");
            }
            classes[idx] = e.class_id;
        }
    }
    return classes;
}

FeatureSet encode(const SynthScreen& screen, int instruction_class, const EncoderParams& enc) {
    if (instruction_class < 0 || instruction_class >= enc.class_count()) {
        throw InvalidArgument("encode: instruction class out of vocabulary");
    }
    for (const Element& e : screen.elements) {
        if (e.class_id < 0 || e.class_id >= enc.class_count()) {
            throw InvalidArgument("encode: element class out of vocabulary");
        }
    }

    const int d = enc.dim();
    const int m = screen.grid.patch_count();
    const std::vector<int> classes = patch_classes(screen);

    FeatureSet fs;
    fs.grid = screen.grid;
    fs.patch_features.resize(d, m);
    for (int i = 0; i < m; ++i) {
        fs.patch_features.col(i) =
            classes[i] < 0 ? enc.background_emb : enc.class_emb.col(classes[i]);
    }
    if (screen.background_noise_scale > 0.0) {
        Rng noise(mix_seed(screen.seed, kStreamNoise));
        for (int i = 0; i < m; ++i) {
            for (int k = 0; k < d; ++k) {
                fs.patch_features(k, i) += screen.background_noise_scale * noise.normal();
            }
        }
    }
    fs.anchor = enc.instr_emb.col(instruction_class);
    return fs;
}

FeatureSet encode_record(const GroundingRecord& record, const EncoderParams& enc) {
    if (const auto* synth = std::get_if<SynthScreen>(&record.screen)) {
        return encode(*synth, record.instruction, enc);
    }
    const auto& ext = std::get<ExternalScreen>(record.screen);
    if (ext.patch_features.cols() != ext.grid.patch_count()) {
        throw InvalidArgument("encode_record: external feature count does not match grid");
    }
    FeatureSet fs;
    fs.grid = ext.grid;
    fs.patch_features = ext.patch_features;
    fs.anchor = ext.anchor;
    return fs;
}

const PatchGrid& record_grid(const GroundingRecord& record) {
    if (const auto* synth = std::get_if<SynthScreen>(&record.screen)) return synth->grid;
    return std::get<ExternalScreen>(record.screen).grid;
}

std::vector<GroundingRecord> gen_dataset(std::uint64_t seed, int n_screens, const PatchGrid& grid,
                                         int n_elements_min, int n_elements_max, int class_count,
                                         const GenConfig& cfg, const std::string& category) {
    if (n_screens < 1) throw InvalidArgument("gen_dataset: n_screens must be >= 1");
    if (n_elements_min < 1 || n_elements_max < n_elements_min) {
        throw InvalidArgument("gen_dataset: malformed element count range");
    }

    Rng counts(mix_seed(seed, kStreamCounts));
    const std::uint64_t screens_base = mix_seed(seed, kStreamScreens);

    std::vector<GroundingRecord> records;
    for (int s = 0; s < n_screens; ++s) {
        const int n = static_cast<int>(counts.uniform_int(n_elements_min, n_elements_max));
        const SynthScreen screen = gen_screen(mix_seed(screens_base, s), grid, n, class_count, cfg);
        for (std::size_t e = 0; e < screen.elements.size(); ++e) {
            GroundingRecord rec;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s-%05d-%zu", category.c_str(), s, e);
            rec.id = buf;
            rec.category = category;
            rec.screen = screen;
            rec.instruction = screen.elements[e].class_id;
            rec.gt_bbox = screen.elements[e].bbox;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::vector<VerifierExample> gen_verifier_data(const std::vector<GroundingRecord>& records,
                                               std::uint64_t seed) {
    std::vector<VerifierExample> out;
    out.reserve(records.size() * 2);

    for (std::size_t idx = 0; idx < records.size(); ++idx) {
        const GroundingRecord& rec = records[idx];
        const PatchGrid& grid = record_grid(rec);
        const NormBBox& gt = rec.gt_bbox;
        Rng rng(mix_seed(seed, idx));

        const PixelPoint positive{(gt.left + gt.right) / 2.0 * grid.image_w_px,
                                  (gt.top + gt.bottom) / 2.0 * grid.image_h_px};

        std::optional<PixelPoint> negative;
        if (const auto* synth = std::get_if<SynthScreen>(&rec.screen)) {
            std::vector<const Element*> others;
            for (const Element& e : synth->elements) {
                const bool is_gt = e.bbox.left == gt.left && e.bbox.top == gt.top &&
                                   e.bbox.right == gt.right && e.bbox.bottom == gt.bottom;
                if (!is_gt) others.push_back(&e);
            }
            if (!others.empty()) {
                const Element* pick =
                    others[rng.uniform_int(0, static_cast<std::int64_t>(others.size()) - 1)];
                negative = PixelPoint{(pick->bbox.left + pick->bbox.right) / 2.0 * grid.image_w_px,
                                      (pick->bbox.top + pick->bbox.bottom) / 2.0 * grid.image_h_px};
            }
        }
        if (!negative) {
            for (int attempt = 0; attempt < 100 && !negative; ++attempt) {
                PixelPoint p{rng.uniform(0.0, grid.image_w_px), rng.uniform(0.0, grid.image_h_px)};
                if (!point_in_bbox(p, gt, grid.image_w_px, grid.image_h_px)) negative = p;
            }
            // Systematic sweep in case the box covers nearly everything.
            for (int i = 0; i < grid.patch_count() && !negative; ++i) {
                const PixelPoint p = patch_center_px(i, grid);
                if (!point_in_bbox(p, gt, grid.image_w_px, grid.image_h_px)) negative = p;
            }
        }
        if (!negative) {
            PA_LOG_WARN("gen_verifier_data: record %s has no point outside gt_bbox; skipping",
                        rec.id.c_str());
            continue;
        }

        out.push_back({rec, positive, true});
        out.push_back({rec, *negative, false});
    }
    return out;
}

} // namespace patch_actor
