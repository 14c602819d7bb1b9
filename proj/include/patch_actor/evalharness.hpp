#pragma once

#include "patch_actor/actionhead.hpp"
#include "patch_actor/candidates.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/verifier.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace patch_actor {

enum class Pipeline { plain, verified };

const char* to_string(Pipeline pipeline);

struct EvalConfig {
    Pipeline pipeline = Pipeline::plain;
    SelectionConfig selection;
    int workers = 1;
    int hit_k_max = 3; // Hit@k reported for k = 1..hit_k_max
};

struct EvalRecordResult {
    std::string id;
    std::string category;
    PixelPoint predicted;
    bool hit = false;
    std::vector<bool> hits_at; // hits_at[k-1] = any of the top k candidates hits
    int evaluated_count = 0;   // verifier calls (verified pipeline)
    bool early_exit = false;
    bool fallback_used = false;
    int failure_count = 0;
};

struct CategoryStats {
    std::size_t count = 0;
    Scalar accuracy = 0.0;
};

struct EvalReport {
    std::string pipeline;
    std::map<std::string, CategoryStats> categories;
    Scalar overall = 0.0;
    std::map<int, Scalar> hit_at; // k -> fraction of records with a top-k hit
    Scalar mean_evaluated = 0.0;  // mean verifier calls per record (verified)
    std::size_t record_count = 0;
    std::size_t skipped_count = 0;
    std::uint64_t config_digest = 0;
};

struct EvalOutcome {
    EvalReport report;
    std::vector<EvalRecordResult> results;     // in input record order
    std::vector<std::size_t> skipped_indices;  // records that failed to evaluate
};

/// True iff the point lies inside the box, boundaries included: a click on
/// an element's edge still activates it.
bool element_hit(const PixelPoint& point, const NormBBox& gt_bbox, int image_w_px,
                 int image_h_px);

/// True iff any of the top-k candidates (weight order; k past the end means
/// all of them) hits the box.
bool hit_at_k(const CandidateSet& candidates, const NormBBox& gt_bbox, int k);

/// Digest of the evaluation-relevant configuration: pipeline, selection
/// knobs, and hit depth. Worker count and file paths deliberately excluded —
/// they must not change results.
std::uint64_t eval_config_digest(const EvalConfig& cfg);

/// Grounds every record, derives candidates, and scores the pipeline's
/// prediction. The verified pipeline needs a scorer; plain ignores it.
/// Records that fail to evaluate are skipped with their indices reported;
/// more than 10% skipped aborts with SchemaError. Results are merged in
/// record order, so the outcome does not depend on cfg.workers.
EvalOutcome evaluate(const std::vector<GroundingRecord>& records, const Model& model,
                     const Scorer* scorer, const EvalConfig& cfg);

} // namespace patch_actor
