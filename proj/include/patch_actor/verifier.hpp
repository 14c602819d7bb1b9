#pragma once

#include "patch_actor/candidates.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/types.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace patch_actor {

/// Clamped square crop around a candidate point, in pixels.
struct CropWindow {
    int left = 0, top = 0, right = 0, bottom = 0;
};

struct ScoreRequest {
    const GroundingRecord* record = nullptr;
    PixelPoint point;
    CropWindow crop;
};

/// Judges whether a marked point satisfies a record's instruction.
/// Implementations must be immutable after construction and re-entrant;
/// scores are always in [0,1].
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual Scalar score(const ScoreRequest& request) const = 0;
    virtual const char* name() const = 0;
};

/// Ground-truth scorer for tests and dominance baselines: 1 inside the gt
/// box, 0 outside, flipped with probability noise_rate. Flips are keyed on
/// (seed, record id, exact point bits), so re-querying the same point gives
/// the same answer and distinct points flip independently.
class OracleScorer final : public Scorer {
public:
    OracleScorer(Scalar noise_rate, std::uint64_t seed);
    Scalar score(const ScoreRequest& request) const override;
    const char* name() const override { return "oracle"; }

    Scalar noise_rate() const { return noise_rate_; }

private:
    Scalar noise_rate_;
    std::uint64_t seed_;
};

/// Trainable logistic verifier over crop-local features: the marked patch's
/// feature and the crop's mean feature, each crossed with the anchor, plus
/// point-offset terms. Carries its own encoder so scoring is self-contained.
class ToyVerifier final : public Scorer {
public:
    ToyVerifier(EncoderParams encoder, Vector weights);
    Scalar score(const ScoreRequest& request) const override;
    const char* name() const override { return "toy"; }

    /// phi = [vec(v_at anchor^T), vec(v_mean anchor^T), dx, dy, 1].
    Vector features(const ScoreRequest& request) const;
    static int feature_dim(int d) { return 2 * d * d + 3; }

    const Vector& weights() const { return weights_; }
    const EncoderParams& encoder() const { return encoder_; }

private:
    EncoderParams encoder_;
    Vector weights_;
};

struct SelectionResult {
    CandidatePoint chosen;
    Scalar score = 0.0;
    int evaluated_count = 0;
    bool early_exit = false;
    bool fallback_used = false;
    int failure_count = 0; // scorer exceptions downgraded to score 0
};

/// window = (max(0, x-c/2), max(0, y-c/2), min(W, x+c/2), min(H, y+c/2)),
/// integer arithmetic, then widened minimally if clamping collapsed a side.
CropWindow crop_window(const PixelPoint& point, int crop_px, int image_w, int image_h);

/// Walks candidates by weight descending, scoring each on its crop; returns
/// the first with score > gamma, else the argmax-score candidate (earlier
/// candidate wins ties). Scorer exceptions score 0 and never abort.
SelectionResult select(const CandidateSet& candidates, const GroundingRecord& record,
                       const Scorer& scorer, const SelectionConfig& cfg);

/// Mean of single-crop scores over the listed crop sizes.
Scalar self_aggregate_score(const GroundingRecord& record, const PixelPoint& point,
                            const Scorer& scorer, const std::vector<int>& agg_crops);

struct VerifierTrainConfig {
    Scalar learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int crop_px = 1000;
};

/// Logistic regression on VerifierExamples: zero-initialized weights, Adam
/// minibatch descent on the convex cross-entropy. Features are extracted
/// once up front (the encoder is fixed during verifier training).
ToyVerifier train_toy_verifier(const std::vector<VerifierExample>& examples,
                               const EncoderParams& encoder, const VerifierTrainConfig& cfg);

/// Mean cross-entropy of the verifier on a set of examples.
Scalar verifier_loss(const ToyVerifier& verifier, const std::vector<VerifierExample>& examples,
                     int crop_px);

/// Gradient of verifier_loss with respect to the verifier's weights.
Vector verifier_loss_gradient(const ToyVerifier& verifier,
                              const std::vector<VerifierExample>& examples, int crop_px);

/// Fraction of examples classified correctly at threshold 0.5.
Scalar verifier_accuracy(const ToyVerifier& verifier,
                         const std::vector<VerifierExample>& examples, int crop_px);

} // namespace patch_actor
