#pragma once

#include "patch_actor/geometry.hpp"
#include "patch_actor/rng.hpp"
#include "patch_actor/types.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace patch_actor {

/// One UI element on a synthetic screen: a class id (what kind of widget it
/// stands for) and its normalized box.
struct Element {
    int class_id = 0;
    NormBBox bbox;
};

/// Procedurally generated screen. Elements are patch-aligned rectangles with
/// pairwise-disjoint patch masks; the seed pins both the layout and the
/// feature noise drawn in encode().
struct SynthScreen {
    std::uint64_t seed = 0;
    PatchGrid grid;
    std::vector<Element> elements;
    Scalar background_noise_scale = 0.1;
};

/// Hook for real-screenshot data: features come precomputed instead of from
/// the synthetic encoder. The engine treats both screen kinds uniformly.
struct ExternalScreen {
    std::string image_path;
    PatchGrid grid;
    Matrix patch_features; // d x M, one column per patch
    Vector anchor;
};

/// One grounding task: a screen, an instruction, and the ground-truth box.
struct GroundingRecord {
    std::string id;
    std::string category = "default";
    std::variant<SynthScreen, ExternalScreen> screen;
    int instruction = 0;          // target class id (synthetic screens)
    std::string instruction_text; // free text (external screens)
    NormBBox gt_bbox;
};

/// One verifier training pair: is marked_point the instructed target?
struct VerifierExample {
    GroundingRecord record;
    PixelPoint point;
    bool label = false;
};

/// Embedding tables standing in for a frozen vision/language backbone:
/// per-class patch appearance, background appearance, and per-class
/// instruction embedding (the anchor).
struct EncoderParams {
    Matrix class_emb;      // d x C
    Vector background_emb; // d
    Matrix instr_emb;      // d x C

    int dim() const { return static_cast<int>(background_emb.size()); }
    int class_count() const { return static_cast<int>(class_emb.cols()); }
};

/// Per-patch features plus the anchor vector for one record.
struct FeatureSet {
    PatchGrid grid;
    Matrix patch_features; // d x M
    Vector anchor;

    int dim() const { return static_cast<int>(anchor.size()); }
};

/// Generation knobs beyond the core (seed, grid, n, C) signature. Element
/// sizes are in patch units. adjacent_pairs places elements in edge-touching
/// pairs, the stress layout where argmax errors land on a neighbor.
struct GenConfig {
    int min_elem_w = 1;
    int max_elem_w = 3;
    int min_elem_h = 1;
    int max_elem_h = 2;
    Scalar noise_scale = 0.1;
    bool adjacent_pairs = false;
    int max_attempts = 200;
};

constexpr int kDefaultImageW = 448;
constexpr int kDefaultImageH = 336;
constexpr int kDefaultPatchPx = 28;
constexpr int kDefaultDim = 32;
constexpr int kDefaultClassCount = 8;
constexpr int kDefaultMinElements = 3;
constexpr int kDefaultMaxElements = 6;

/// Uniform(-0.5, 0.5)/sqrt(d) embeddings; throws NumericalError if any two
/// class columns coincide (they never should).
EncoderParams init_encoder(int dim, int class_count, std::uint64_t seed);

/// Places n_elements non-overlapping patch-aligned rectangles with distinct
/// classes. Deterministic per (seed, inputs); GenerationFailed when bounded
/// retries cannot fit an element.
SynthScreen gen_screen(std::uint64_t seed, const PatchGrid& grid, int n_elements, int class_count,
                       const GenConfig& cfg = {});

/// Per-patch class id (-1 for background), row-major.
std::vector<int> patch_classes(const SynthScreen& screen);

/// Patch features = class/background embedding + seeded Gaussian noise;
/// anchor = instruction embedding. Noise depends only on the screen seed, so
/// different instructions over one screen share patch features exactly.
FeatureSet encode(const SynthScreen& screen, int instruction_class, const EncoderParams& enc);

/// encode() for synthetic screens, stored features for external ones.
FeatureSet encode_record(const GroundingRecord& record, const EncoderParams& enc);

const PatchGrid& record_grid(const GroundingRecord& record);

/// One record per (screen, element): instruction = the element's class,
/// gt_bbox = its box. Screens draw n uniformly from [n_min, n_max].
std::vector<GroundingRecord> gen_dataset(std::uint64_t seed, int n_screens, const PatchGrid& grid,
                                         int n_elements_min, int n_elements_max, int class_count,
                                         const GenConfig& cfg = {},
                                         const std::string& category = "default");

/// Balanced pairs: one positive at the gt box center, one negative at a
/// different element's center when one exists, else at a random point
/// outside the gt box. Records whose gt covers the whole screen are skipped
/// with a warning.
std::vector<VerifierExample> gen_verifier_data(const std::vector<GroundingRecord>& records,
                                               std::uint64_t seed);

} // namespace patch_actor
