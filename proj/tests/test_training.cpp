#include <doctest.h>

#include "patch_actor/errors.hpp"
#include "patch_actor/training.hpp"

#include <cmath>

using namespace patch_actor;

namespace {

const PatchGrid kGrid = make_grid(448, 336, 28);

Scalar record_loss(const Model& model, const GroundingRecord& rec, Scalar epsilon) {
    const TargetDistribution t =
        target_from_mask(rasterize_bbox(rec.gt_bbox, record_grid(rec)), epsilon);
    return kl_loss(t, ground(model, rec));
}

bool same_head(const ActionHeadParams& a, const ActionHeadParams& b) {
    return a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.mlp_anchor.w1 == b.mlp_anchor.w1 &&
           a.mlp_anchor.b1 == b.mlp_anchor.b1 && a.mlp_anchor.w2 == b.mlp_anchor.w2 &&
           a.mlp_anchor.b2 == b.mlp_anchor.b2 && a.mlp_patch.w1 == b.mlp_patch.w1 &&
           a.mlp_patch.b1 == b.mlp_patch.b1 && a.mlp_patch.w2 == b.mlp_patch.w2 &&
           a.mlp_patch.b2 == b.mlp_patch.b2;
}

bool same_encoder(const EncoderParams& a, const EncoderParams& b) {
    return a.class_emb == b.class_emb && a.background_emb == b.background_emb &&
           a.instr_emb == b.instr_emb;
}

} // namespace

TEST_CASE("lr=0 leaves parameters untouched and the loss curve flat") {
    const auto records = gen_dataset(1, 5, kGrid, 3, 3, 8);
    Model model = init_model(32, 8, 7);
    const Model before = model;

    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.seed = 1;
    const TrainResult r = train(model, records, cfg);

    CHECK(same_head(model.head, before.head));
    CHECK(same_encoder(model.encoder, before.encoder));
    REQUIRE(r.epoch_mean_loss.size() == 3);
    CHECK(r.epoch_mean_loss[0] == r.epoch_mean_loss[1]);
    CHECK(r.epoch_mean_loss[1] == r.epoch_mean_loss[2]);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    const auto records = gen_dataset(2, 8, kGrid, 3, 4, 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 99;

    Model a = init_model(32, 8, 5);
    Model b = init_model(32, 8, 5);
    const TrainResult ra = train(a, records, cfg);
    const TrainResult rb = train(b, records, cfg);

    CHECK(same_head(a.head, b.head));
    CHECK(same_encoder(a.encoder, b.encoder));
    CHECK(ra.epoch_mean_loss == rb.epoch_mean_loss);
}

TEST_CASE("lite mode never touches the encoder; full mode does after warm-up") {
    const auto records = gen_dataset(3, 8, kGrid, 3, 4, 8);

    TrainConfig lite;
    lite.mode = TrainMode::lite;
    lite.epochs = 2;
    lite.seed = 4;
    Model m_lite = init_model(32, 8, 6);
    const Model before_lite = m_lite;
    train(m_lite, records, lite);
    CHECK(same_encoder(m_lite.encoder, before_lite.encoder));
    CHECK_FALSE(same_head(m_lite.head, before_lite.head));

    // During warm-up only the head moves.
    TrainConfig warm;
    warm.mode = TrainMode::full;
    warm.epochs = 1;
    warm.warmup_epochs = 1;
    warm.seed = 4;
    Model m_warm = init_model(32, 8, 6);
    const Model before_warm = m_warm;
    train(m_warm, records, warm);
    CHECK(same_encoder(m_warm.encoder, before_warm.encoder));

    // One more epoch unfreezes it.
    TrainConfig full = warm;
    full.epochs = 2;
    Model m_full = init_model(32, 8, 6);
    train(m_full, records, full);
    CHECK_FALSE(same_encoder(m_full.encoder, before_warm.encoder));
}

TEST_CASE("loss trends downward on a small dataset") {
    const auto records = gen_dataset(11, 12, kGrid, 3, 4, 8);
    Model model = init_model(32, 8, 8);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 2;
    const TrainResult r = train(model, records, cfg);
    REQUIRE(r.epoch_mean_loss.size() == 6);
    CHECK(r.epoch_mean_loss.back() < r.epoch_mean_loss.front());
}

TEST_CASE("a single sufficiently small step never increases a record's loss") {
    int tested = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const auto records = gen_dataset(trial * 13 + 1, 1, kGrid, 1, 3, 8);
        const GroundingRecord& rec = records.front();
        Model model = init_model(16, 8, trial);

        TrainConfig cfg;
        cfg.learning_rate = 1e-7;
        cfg.epochs = 1;
        cfg.batch_size = 1;
        cfg.warmup_epochs = 0;
        cfg.seed = trial;

        const Scalar before = record_loss(model, rec, cfg.target_epsilon);
        train(model, {rec}, cfg);
        const Scalar after = record_loss(model, rec, cfg.target_epsilon);
        CHECK(after <= before + 1e-8);
        ++tested;
    }
    CHECK(tested == 100);
}

TEST_CASE("train validates its inputs") {
    const auto records = gen_dataset(1, 2, kGrid, 3, 3, 8);
    Model model = init_model(32, 8, 7);
    TrainConfig cfg;

    cfg.epochs = 0;
    CHECK_THROWS_AS(train(model, records, cfg), InvalidArgument);
    cfg.epochs = 1;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(train(model, records, cfg), InvalidArgument);
    cfg.learning_rate = 1e-3;
    CHECK_THROWS_AS(train(model, {}, cfg), InvalidArgument);
}
