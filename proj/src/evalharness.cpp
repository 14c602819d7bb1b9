#include "patch_actor/evalharness.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/hash.hpp"
#include "patch_actor/log.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

namespace patch_actor {

namespace {

struct Slot {
    EvalRecordResult result;
    bool skipped = false;
    std::string reason;
};

Slot eval_one(const GroundingRecord& record, const Model& model, const Scorer* scorer,
              const EvalConfig& cfg) {
    Slot slot;
    EvalRecordResult& r = slot.result;
    r.id = record.id;
    r.category = record.category;

    const PatchGrid& grid = record_grid(record);
    const AttentionMap map = ground(model, record);
    const CandidateSet candidates = build_candidates(map, cfg.selection);
    if (candidates.candidates.empty()) {
        throw NumericalError("evaluate: no candidates for record " + record.id);
    }

    if (cfg.pipeline == Pipeline::plain) {
        r.predicted = candidates.candidates.front().point_px;
    } else {
        const SelectionResult sel = select(candidates, record, *scorer, cfg.selection);
        r.predicted = sel.chosen.point_px;
        r.evaluated_count = sel.evaluated_count;
        r.early_exit = sel.early_exit;
        r.fallback_used = sel.fallback_used;
        r.failure_count = sel.failure_count;
    }

    r.hit = element_hit(r.predicted, record.gt_bbox, grid.image_w_px, grid.image_h_px);
    r.hits_at.resize(cfg.hit_k_max);
    for (int k = 1; k <= cfg.hit_k_max; ++k) {
        r.hits_at[k - 1] = hit_at_k(candidates, record.gt_bbox, k);
    }
    return slot;
}

} // namespace

const char* to_string(Pipeline pipeline) {
    return pipeline == Pipeline::plain ? "plain" : "verified";
}

bool element_hit(const PixelPoint& point, const NormBBox& gt_bbox, int image_w_px,
                 int image_h_px) {
    return point_in_bbox(point, gt_bbox, image_w_px, image_h_px);
}

bool hit_at_k(const CandidateSet& candidates, const NormBBox& gt_bbox, int k) {
    if (k < 1) throw InvalidArgument("hit_at_k: k must be >= 1");
    const PatchGrid& grid = candidates.grid;
    const std::size_t depth =
        std::min(static_cast<std::size_t>(k), candidates.candidates.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (element_hit(candidates.candidates[i].point_px, gt_bbox, grid.image_w_px,
                        grid.image_h_px)) {
            return true;
        }
    }
    return false;
}

std::uint64_t eval_config_digest(const EvalConfig& cfg) {
    std::uint64_t h = fnv1a(to_string(cfg.pipeline));
    const auto mix_int = [&h](std::int64_t v) { h = fnv1a(&v, sizeof v, h); };
    mix_int(cfg.hit_k_max);
    mix_int(cfg.selection.max_pool);
    h = fnv1a_bits(cfg.selection.rel_filter, h);
    h = fnv1a_bits(cfg.selection.gamma, h);
    mix_int(cfg.selection.crop_px);
    mix_int(static_cast<std::int64_t>(cfg.selection.agg_crops.size()));
    for (const int c : cfg.selection.agg_crops) mix_int(c);
    mix_int(cfg.selection.use_aggregation ? 1 : 0);
    return h;
}

EvalOutcome evaluate(const std::vector<GroundingRecord>& records, const Model& model,
                     const Scorer* scorer, const EvalConfig& cfg) {
    if (records.empty()) throw InvalidArgument("evaluate: empty dataset");
    if (cfg.workers < 1) throw InvalidArgument("evaluate: workers must be >= 1");
    if (cfg.hit_k_max < 1) throw InvalidArgument("evaluate: hit_k_max must be >= 1");
    if (cfg.pipeline == Pipeline::verified && scorer == nullptr) {
        throw InvalidArgument("evaluate: verified pipeline needs a scorer");
    }

    const std::size_t n = records.size();
    std::vector<Slot> slots(n);

    // Records are independent; workers claim indices from a shared counter
    // and write only their own slots, so the merged outcome is identical for
    // any worker count.
    const int workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n));
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                slots[i] = eval_one(records[i], model, scorer, cfg);
            } catch (const std::exception& e) {
                slots[i].skipped = true;
                slots[i].reason = e.what();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (std::thread& t : pool) t.join();
    }

    EvalOutcome out;
    out.report.pipeline = to_string(cfg.pipeline);
    out.report.config_digest = eval_config_digest(cfg);

    struct Tally {
        std::size_t count = 0;
        std::size_t hits = 0;
    };
    std::map<std::string, Tally> tallies;
    std::vector<std::size_t> hit_k_counts(cfg.hit_k_max, 0);
    std::size_t total_hits = 0;
    long long evaluated_total = 0;

    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i].skipped) {
            PA_LOG_WARN("evaluate: skipping record %zu (%s): %s", i, records[i].id.c_str(),
                        slots[i].reason.c_str());
            out.skipped_indices.push_back(i);
            continue;
        }
        EvalRecordResult& r = slots[i].result;
        Tally& t = tallies[r.category];
        ++t.count;
        if (r.hit) {
            ++t.hits;
            ++total_hits;
        }
        for (int k = 0; k < cfg.hit_k_max; ++k) {
            if (r.hits_at[k]) ++hit_k_counts[k];
        }
        evaluated_total += r.evaluated_count;
        out.results.push_back(std::move(r));
    }

    if (10 * out.skipped_indices.size() > n) {
        throw SchemaError("evaluate: " + std::to_string(out.skipped_indices.size()) + " of " +
                          std::to_string(n) + " records malformed (over 10%)");
    }
    if (out.results.empty()) throw SchemaError("evaluate: every record was skipped");

    std::set<std::string> noted;
    for (const GroundingRecord& rec : records) {
        if (tallies.find(rec.category) == tallies.end() && noted.insert(rec.category).second) {
            PA_LOG_INFO("evaluate: category '%s' has no evaluated records; omitted from report",
                        rec.category.c_str());
        }
    }

    const std::size_t kept = out.results.size();
    out.report.record_count = kept;
    out.report.skipped_count = out.skipped_indices.size();
    out.report.overall = static_cast<Scalar>(total_hits) / static_cast<Scalar>(kept);
    for (const auto& [category, tally] : tallies) {
        out.report.categories[category] = {
            tally.count, static_cast<Scalar>(tally.hits) / static_cast<Scalar>(tally.count)};
    }
    for (int k = 1; k <= cfg.hit_k_max; ++k) {
        out.report.hit_at[k] =
            static_cast<Scalar>(hit_k_counts[k - 1]) / static_cast<Scalar>(kept);
    }
    if (cfg.pipeline == Pipeline::verified) {
        out.report.mean_evaluated =
            static_cast<Scalar>(evaluated_total) / static_cast<Scalar>(kept);
    }
    return out;
}

} // namespace patch_actor
