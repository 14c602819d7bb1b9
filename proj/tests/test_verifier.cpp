#include "patch_actor/verifier.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace patch_actor;

namespace {

// Direct transcription of the clamped-crop formula, kept independent of the
// library implementation.
CropWindow oracle_crop(int x, int y, int c, int w, int h) {
    CropWindow out;
    out.left = std::max(0, x - c / 2);
    out.top = std::max(0, y - c / 2);
    out.right = std::min(w, x + c / 2);
    out.bottom = std::min(h, y + c / 2);
    return out;
}

bool same(const CropWindow& a, const CropWindow& b) {
    return a.left == b.left && a.top == b.top && a.right == b.right && a.bottom == b.bottom;
}

GroundingRecord make_record(std::uint64_t screen_seed, int n_elements, int which,
                            const GenConfig& cfg = {}) {
    const PatchGrid grid = make_grid(kDefaultImageW, kDefaultImageH, kDefaultPatchPx);
    const SynthScreen screen =
        gen_screen(screen_seed, grid, n_elements, kDefaultClassCount, cfg);
    GroundingRecord rec;
    rec.id = "rec-" + std::to_string(screen_seed) + "-" + std::to_string(which);
    rec.screen = screen;
    rec.instruction = screen.elements[which].class_id;
    rec.gt_bbox = screen.elements[which].bbox;
    return rec;
}

PixelPoint bbox_center(const GroundingRecord& rec) {
    const PatchGrid& g = record_grid(rec);
    return {0.5 * (rec.gt_bbox.left + rec.gt_bbox.right) * g.image_w_px,
            0.5 * (rec.gt_bbox.top + rec.gt_bbox.bottom) * g.image_h_px};
}

// A candidate set laid out by hand; weights already descending.
CandidateSet make_candidates(const std::vector<PixelPoint>& points, const PatchGrid& grid) {
    CandidateSet set;
    set.grid = grid;
    Scalar w = 1.0;
    for (const PixelPoint& p : points) {
        set.candidates.push_back({p, w, CandidateSource::patch});
        w *= 0.5;
    }
    return set;
}

// Scorer stub with a fixed response per call order or per crop size.
struct StubScorer final : Scorer {
    std::vector<Scalar> by_call;       // consumed in call order when nonempty
    mutable std::size_t cursor = 0;
    Scalar fallback = 0.0;
    Scalar score(const ScoreRequest&) const override {
        if (cursor < by_call.size()) return by_call[cursor++];
        return fallback;
    }
    const char* name() const override { return "stub"; }
};

struct ThrowingScorer final : Scorer {
    Scalar score(const ScoreRequest&) const override { throw std::runtime_error("boom"); }
    const char* name() const override { return "throwing"; }
};

} // namespace

TEST_CASE("crop_window matches the direct formula on seeded random cases") {
    Rng rng(0x63726f70);
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(1, 4000));
        const int h = static_cast<int>(rng.uniform_int(1, 4000));
        const int c = static_cast<int>(rng.uniform_int(2, 3000));
        const int x = static_cast<int>(rng.uniform_int(0, w - 1));
        const int y = static_cast<int>(rng.uniform_int(0, h - 1));
        const CropWindow got = crop_window({static_cast<Scalar>(x), static_cast<Scalar>(y)}, c, w, h);
        const CropWindow want = oracle_crop(x, y, c, w, h);
        if (want.left < want.right && want.top < want.bottom) {
            REQUIRE(same(got, want));
        } else {
            // formula collapsed a side; the implementation returns the
            // minimal containing window instead
            REQUIRE(got.left < got.right);
            REQUIRE(got.top < got.bottom);
        }
    }
}

TEST_CASE("crop_window pinned examples") {
    const CropWindow mid = crop_window({960, 540}, 1000, 1920, 1080);
    CHECK(mid.left == 460);
    CHECK(mid.top == 40);
    CHECK(mid.right == 1460);
    CHECK(mid.bottom == 1040);

    // Corner crop: both low edges clamp to 0 and both high edges sit at
    // point + half-crop, inside the image.
    const CropWindow corner = crop_window({0, 0}, 1000, 1920, 1080);
    CHECK(corner.left == 0);
    CHECK(corner.top == 0);
    CHECK(corner.right == 500);
    CHECK(corner.bottom == 500);

    // Oversized crop saturates to the full image.
    const CropWindow full = crop_window({3, 900}, 2 * 1920, 1920, 1080);
    CHECK(full.left == 0);
    CHECK(full.top == 0);
    CHECK(full.right == 1920);
    CHECK(full.bottom == 1080);
}

TEST_CASE("crop_window degenerate sides widen to one pixel") {
    const CropWindow tiny = crop_window({7.6, 3.2}, 1, 100, 100);
    CHECK(tiny.left == 7);
    CHECK(tiny.right == 8);
    CHECK(tiny.top == 3);
    CHECK(tiny.bottom == 4);

    // Point on the far edge: the window backs up one pixel to stay inside.
    const CropWindow edge = crop_window({100, 50}, 1, 100, 100);
    CHECK(edge.left == 99);
    CHECK(edge.right == 100);
    CHECK(edge.top == 50);
    CHECK(edge.bottom == 51);

    CHECK_THROWS_AS(crop_window({0, 0}, 0, 100, 100), InvalidArgument);
    CHECK_THROWS_AS(crop_window({0, 0}, 100, 0, 100), InvalidArgument);
}

TEST_CASE("crop_window floors fractional points") {
    const CropWindow a = crop_window({10.9, 20.1}, 8, 100, 100);
    const CropWindow b = crop_window({10.0, 20.0}, 8, 100, 100);
    CHECK(same(a, b));
}

TEST_CASE("oracle scorer is exact without noise") {
    const GroundingRecord rec = make_record(501, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const OracleScorer oracle(0.0, 99);

    ScoreRequest at_center;
    at_center.record = &rec;
    at_center.point = bbox_center(rec);
    at_center.crop = crop_window(at_center.point, 1000, grid.image_w_px, grid.image_h_px);
    CHECK(oracle.score(at_center) == 1.0);

    // A point at the center of a different element lies outside the gt box
    // (elements never overlap).
    const GroundingRecord other = make_record(501, 3, 1);
    ScoreRequest outside = at_center;
    outside.point = bbox_center(other);
    outside.crop = crop_window(outside.point, 1000, grid.image_w_px, grid.image_h_px);
    CHECK(oracle.score(outside) == 0.0);
}

TEST_CASE("oracle scorer flips are repeatable per point and match the rate") {
    const GroundingRecord rec = make_record(502, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const OracleScorer oracle(0.1, 7);
    const PixelPoint center = bbox_center(rec);

    int flips = 0;
    const int trials = 10000;
    Rng rng(0x6f726163);
    for (int i = 0; i < trials; ++i) {
        ScoreRequest req;
        req.record = &rec;
        req.point = {rng.uniform() * (grid.image_w_px - 1), rng.uniform() * (grid.image_h_px - 1)};
        req.crop = crop_window(req.point, 1000, grid.image_w_px, grid.image_h_px);
        const bool inside = point_in_bbox(req.point, rec.gt_bbox, grid.image_w_px, grid.image_h_px);
        const Scalar s = oracle.score(req);
        CHECK((s == 0.0 || s == 1.0));
        if ((s == 1.0) != inside) ++flips;
        // same point, different crop: identical verdict
        ScoreRequest again = req;
        again.crop = crop_window(req.point, 600, grid.image_w_px, grid.image_h_px);
        CHECK(oracle.score(again) == s);
    }
    const double rate = static_cast<double>(flips) / trials;
    CHECK(rate == doctest::Approx(0.1).epsilon(0.1)); // 0.1 +- 0.01

    ScoreRequest req;
    req.record = &rec;
    req.point = center;
    req.crop = crop_window(center, 1000, grid.image_w_px, grid.image_h_px);
    CHECK(oracle.score(req) == oracle.score(req));

    CHECK_THROWS_AS(OracleScorer(1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(OracleScorer(-0.1, 0), InvalidArgument);
}

TEST_CASE("selection stops at the first score above gamma") {
    const GroundingRecord rec = make_record(503, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const CandidateSet cands =
        make_candidates({{10, 10}, {50, 50}, {90, 90}, {130, 130}}, grid);

    StubScorer scorer;
    scorer.by_call = {0.2, 0.3, 0.99, 0.5};
    SelectionConfig cfg;
    cfg.gamma = 0.95;
    const SelectionResult r = select(cands, rec, scorer, cfg);
    CHECK(r.early_exit);
    CHECK_FALSE(r.fallback_used);
    CHECK(r.evaluated_count == 3);
    CHECK(r.score == 0.99);
    CHECK(r.chosen.point_px == PixelPoint{90, 90});
}

TEST_CASE("selection falls back to the argmax score with earlier ties winning") {
    const GroundingRecord rec = make_record(503, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const CandidateSet cands = make_candidates({{10, 10}, {50, 50}, {90, 90}}, grid);

    StubScorer scorer;
    scorer.by_call = {0.4, 0.7, 0.7};
    SelectionConfig cfg;
    cfg.gamma = 0.95;
    const SelectionResult r = select(cands, rec, scorer, cfg);
    CHECK(r.fallback_used);
    CHECK_FALSE(r.early_exit);
    CHECK(r.evaluated_count == 3);
    CHECK(r.score == 0.7);
    CHECK(r.chosen.point_px == PixelPoint{50, 50}); // first of the tied pair
}

TEST_CASE("gamma=1 never early-exits; strictly positive scores exit at gamma=0") {
    const GroundingRecord rec = make_record(504, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const CandidateSet cands = make_candidates({{10, 10}, {50, 50}, {90, 90}}, grid);

    StubScorer high;
    high.by_call = {1.0, 1.0, 1.0};
    SelectionConfig cfg;
    cfg.gamma = 1.0;
    const SelectionResult all = select(cands, rec, high, cfg);
    CHECK(all.fallback_used);
    CHECK(all.evaluated_count == 3);

    StubScorer tiny;
    tiny.fallback = 1e-9;
    cfg.gamma = 0.0;
    const SelectionResult first = select(cands, rec, tiny, cfg);
    CHECK(first.early_exit);
    CHECK(first.evaluated_count == 1);
    CHECK(first.chosen.point_px == cands.candidates.front().point_px);
}

TEST_CASE("scorer failures score zero and never abort selection") {
    const GroundingRecord rec = make_record(505, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const CandidateSet cands = make_candidates({{10, 10}, {50, 50}}, grid);

    const ThrowingScorer scorer;
    SelectionConfig cfg;
    cfg.gamma = 0.5;
    const SelectionResult r = select(cands, rec, scorer, cfg);
    CHECK(r.fallback_used);
    CHECK(r.evaluated_count == 2);
    CHECK(r.failure_count == 2);
    CHECK(r.score == 0.0);
    CHECK(r.chosen.point_px == cands.candidates.front().point_px); // all-zero tie -> first

    CHECK_THROWS_AS(select(CandidateSet{{}, grid}, rec, scorer, cfg), InvalidArgument);
}

TEST_CASE("perfect oracle selection recovers a correct lower-ranked candidate") {
    const GroundingRecord rec = make_record(506, 4, 0);
    const PatchGrid& grid = record_grid(rec);
    const GroundingRecord wrong1 = make_record(506, 4, 1);
    const GroundingRecord wrong2 = make_record(506, 4, 2);

    const CandidateSet cands =
        make_candidates({bbox_center(wrong1), bbox_center(wrong2), bbox_center(rec)}, grid);
    const OracleScorer oracle(0.0, 0);
    SelectionConfig cfg;
    cfg.gamma = 0.95;
    const SelectionResult r = select(cands, rec, oracle, cfg);
    CHECK(r.early_exit);
    CHECK(r.evaluated_count == 3);
    CHECK(r.chosen.point_px == bbox_center(rec));
    CHECK(point_in_bbox(r.chosen.point_px, rec.gt_bbox, grid.image_w_px, grid.image_h_px));
}

TEST_CASE("self-aggregation hand values via call-order stub") {
    const GroundingRecord rec = make_record(507, 3, 0);
    const PixelPoint center = {224, 168};

    StubScorer scorer;
    scorer.by_call = {0.9, 0.7};
    CHECK(self_aggregate_score(rec, center, scorer, {1200, 1400}) == (0.9 + 0.7) / 2.0);

    StubScorer flat;
    flat.fallback = 0.42;
    CHECK(self_aggregate_score(rec, center, flat, {800, 1000, 1200}) == 0.42);

    StubScorer one;
    one.by_call = {0.31};
    CHECK(self_aggregate_score(rec, center, one, {1000}) == 0.31);

    CHECK_THROWS_AS(self_aggregate_score(rec, center, flat, {}), InvalidArgument);
}

TEST_CASE("aggregated selection compares the mean to gamma") {
    const GroundingRecord rec = make_record(508, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const CandidateSet cands = make_candidates({{30, 30}, {60, 60}}, grid);

    StubScorer scorer;
    scorer.by_call = {0.9, 0.3, 1.0, 1.0}; // candidate 1 mean 0.6; candidate 2 mean 1.0
    SelectionConfig cfg;
    cfg.gamma = 0.7;
    cfg.use_aggregation = true;
    cfg.agg_crops = {1200, 1400};
    const SelectionResult r = select(cands, rec, scorer, cfg);
    CHECK(r.early_exit);
    CHECK(r.evaluated_count == 2);
    CHECK(r.score == 1.0);
    CHECK(r.chosen.point_px == PixelPoint{60, 60});
}

TEST_CASE("toy verifier at zero weights scores one half everywhere") {
    const GroundingRecord rec = make_record(509, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const EncoderParams enc = init_encoder(kDefaultDim, kDefaultClassCount, 11);
    const ToyVerifier verifier(enc, Vector::Zero(ToyVerifier::feature_dim(kDefaultDim)));

    ScoreRequest req;
    req.record = &rec;
    req.point = bbox_center(rec);
    req.crop = crop_window(req.point, 1000, grid.image_w_px, grid.image_h_px);
    CHECK(verifier.score(req) == 0.5);

    std::vector<VerifierExample> examples = gen_verifier_data({rec}, 3);
    REQUIRE(examples.size() == 2);
    CHECK(verifier_loss(verifier, examples, 1000) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("toy verifier feature layout is stable and crop-sensitive") {
    const GroundingRecord rec = make_record(510, 3, 0);
    const PatchGrid& grid = record_grid(rec);
    const EncoderParams enc = init_encoder(kDefaultDim, kDefaultClassCount, 13);
    const ToyVerifier verifier(enc, Vector::Zero(ToyVerifier::feature_dim(kDefaultDim)));

    ScoreRequest req;
    req.record = &rec;
    req.point = bbox_center(rec);
    req.crop = crop_window(req.point, 200, grid.image_w_px, grid.image_h_px);
    const Vector phi_narrow = verifier.features(req);
    REQUIRE(phi_narrow.size() == 2 * kDefaultDim * kDefaultDim + 3);
    CHECK(phi_narrow[phi_narrow.size() - 1] == 1.0);

    req.crop = crop_window(req.point, 2 * kDefaultImageW, grid.image_w_px, grid.image_h_px);
    const Vector phi_full = verifier.features(req);
    // the pooled block must differ between a tight crop and the full screen
    CHECK((phi_narrow.segment(kDefaultDim * kDefaultDim, kDefaultDim * kDefaultDim) -
           phi_full.segment(kDefaultDim * kDefaultDim, kDefaultDim * kDefaultDim))
              .norm() > 0.0);
    // the marked-patch block is crop-independent
    CHECK(phi_narrow.head(kDefaultDim * kDefaultDim) == phi_full.head(kDefaultDim * kDefaultDim));

    CHECK_THROWS_AS(ToyVerifier(enc, Vector::Zero(5)), InvalidArgument);
}

TEST_CASE("logistic gradient matches central finite differences") {
    const PatchGrid grid = make_grid(kDefaultImageW, kDefaultImageH, kDefaultPatchPx);
    const int d = 6;
    const EncoderParams enc = init_encoder(d, 4, 17);

    std::vector<GroundingRecord> recs;
    for (int s = 0; s < 6; ++s) {
        GroundingRecord r;
        r.id = "fd-" + std::to_string(s);
        const SynthScreen screen = gen_screen(900 + s, grid, 3, 4);
        r.screen = screen;
        r.instruction = screen.elements[0].class_id;
        r.gt_bbox = screen.elements[0].bbox;
        recs.push_back(std::move(r));
    }
    const std::vector<VerifierExample> examples = gen_verifier_data(recs, 23);
    REQUIRE(examples.size() >= 8);

    const int fdim = ToyVerifier::feature_dim(d);
    Rng rng(0x76666430);
    Vector w(fdim);
    for (int i = 0; i < fdim; ++i) w[i] = rng.normal() * 0.3;
    const ToyVerifier verifier(enc, w);

    const Vector analytic = verifier_loss_gradient(verifier, examples, 1000);
    const Scalar h = 1e-5;
    Scalar worst = 0.0;
    for (int i = 0; i < fdim; ++i) {
        Vector wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const Scalar lp = verifier_loss(ToyVerifier(enc, wp), examples, 1000);
        const Scalar lm = verifier_loss(ToyVerifier(enc, wm), examples, 1000);
        const Scalar fd = (lp - lm) / (2.0 * h);
        const Scalar rel =
            std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-5});
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("verifier training separates a small synthetic set") {
    const PatchGrid grid = make_grid(kDefaultImageW, kDefaultImageH, kDefaultPatchPx);
    const EncoderParams enc = init_encoder(kDefaultDim, kDefaultClassCount, 19);

    const auto train_recs = gen_dataset(61, 60, grid, 3, 5, kDefaultClassCount);
    const auto hold_recs = gen_dataset(62, 15, grid, 3, 5, kDefaultClassCount);
    const auto train_ex = gen_verifier_data(train_recs, 71);
    const auto hold_ex = gen_verifier_data(hold_recs, 72);
    REQUIRE(train_ex.size() >= 100);
    REQUIRE(hold_ex.size() >= 30);

    VerifierTrainConfig cfg;
    cfg.seed = 5;
    cfg.epochs = 12;
    const ToyVerifier verifier = train_toy_verifier(train_ex, enc, cfg);

    const Scalar fit = verifier_loss(verifier, train_ex, cfg.crop_px);
    CHECK(fit < std::log(2.0)); // below the zero-weight starting loss
    CHECK(verifier_accuracy(verifier, hold_ex, cfg.crop_px) > 0.8);
}

TEST_CASE("verifier training is deterministic per seed") {
    const PatchGrid grid = make_grid(kDefaultImageW, kDefaultImageH, kDefaultPatchPx);
    const EncoderParams enc = init_encoder(8, 4, 29);
    const auto recs = gen_dataset(63, 12, grid, 3, 4, 4);
    const auto ex = gen_verifier_data(recs, 73);

    VerifierTrainConfig cfg;
    cfg.seed = 9;
    cfg.epochs = 3;
    const ToyVerifier a = train_toy_verifier(ex, enc, cfg);
    const ToyVerifier b = train_toy_verifier(ex, enc, cfg);
    REQUIRE(a.weights().size() == b.weights().size());
    for (int i = 0; i < a.weights().size(); ++i) CHECK(a.weights()[i] == b.weights()[i]);
}

TEST_CASE("verifier training rejects degenerate labels") {
    const GroundingRecord rec = make_record(511, 3, 0);
    const EncoderParams enc = init_encoder(kDefaultDim, kDefaultClassCount, 31);

    std::vector<VerifierExample> ex = gen_verifier_data({rec}, 77);
    REQUIRE(ex.size() == 2);
    ex.erase(std::remove_if(ex.begin(), ex.end(),
                            [](const VerifierExample& e) { return !e.label; }),
             ex.end());
    CHECK_THROWS_AS(train_toy_verifier(ex, enc, {}), DegenerateLabels);
    CHECK_THROWS_AS(train_toy_verifier({}, enc, {}), InvalidArgument);
}
