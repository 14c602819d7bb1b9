#include "patch_actor/verifier.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/hash.hpp"
#include "patch_actor/log.hpp"
#include "patch_actor/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace patch_actor {

namespace {

constexpr std::uint64_t kStreamVerifierOrder = 0x766f7264; // "vord"

Scalar sigmoid(Scalar z) {
    // Split on sign so exp never overflows.
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (1.0 + e);
}

// Cross-entropy -[y log p + (1-y) log(1-p)] straight from the logit; the
// log1p form stays finite even where p would round to 0 or 1.
Scalar logistic_ce(Scalar z, bool label) {
    const Scalar zy = label ? z : 0.0;
    return std::max(z, 0.0) - zy + std::log1p(std::exp(-std::abs(z)));
}

void check_request(const ScoreRequest& request) {
    if (request.record == nullptr) {
        throw InvalidArgument("scorer: request carries no record");
    }
    if (request.crop.left >= request.crop.right || request.crop.top >= request.crop.bottom) {
        throw InvalidArgument("scorer: empty crop window");
    }
}

// One scorer call shielded per the selection contract: any exception, or an
// out-of-range/non-finite score, degrades to 0 so selection stays total.
Scalar guarded_score(const GroundingRecord& record, const PixelPoint& point, const Scorer& scorer,
                     int crop_px, int image_w, int image_h, int& failures) {
    try {
        ScoreRequest request;
        request.record = &record;
        request.point = point;
        request.crop = crop_window(point, crop_px, image_w, image_h);
        const Scalar s = scorer.score(request);
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
            PA_LOG_WARN("select: scorer '%s' returned out-of-range score %g; treating as 0",
                        scorer.name(), s);
            ++failures;
            return 0.0;
        }
        return s;
    } catch (const std::exception& e) {
        PA_LOG_WARN("select: scorer '%s' failed (%s); treating as 0", scorer.name(), e.what());
        ++failures;
        return 0.0;
    }
}

Scalar aggregate_or_single(const GroundingRecord& record, const PixelPoint& point,
                           const Scorer& scorer, const SelectionConfig& cfg, int image_w,
                           int image_h, int& failures) {
    if (!cfg.use_aggregation) {
        return guarded_score(record, point, scorer, cfg.crop_px, image_w, image_h, failures);
    }
    Scalar total = 0.0;
    for (const int c : cfg.agg_crops) {
        total += guarded_score(record, point, scorer, c, image_w, image_h, failures);
    }
    return total / static_cast<Scalar>(cfg.agg_crops.size());
}

} // namespace

CropWindow crop_window(const PixelPoint& point, int crop_px, int image_w, int image_h) {
    if (crop_px < 1) throw InvalidArgument("crop_window: crop_px must be >= 1");
    if (image_w < 1 || image_h < 1) throw InvalidArgument("crop_window: empty image");
    if (!std::isfinite(point.x) || !std::isfinite(point.y)) {
        throw InvalidArgument("crop_window: non-finite point");
    }

    const int x = static_cast<int>(std::floor(point.x));
    const int y = static_cast<int>(std::floor(point.y));
    const int half = crop_px / 2;

    CropWindow w;
    w.left = std::max(0, x - half);
    w.top = std::max(0, y - half);
    w.right = std::min(image_w, x + half);
    w.bottom = std::min(image_h, y + half);

    // crop_px=1 (half=0) or a point pinned to an image edge collapses a side;
    // widen to the one-pixel window containing the point.
    if (w.right <= w.left) {
        w.right = std::min(image_w, w.left + 1);
        w.left = w.right - 1;
    }
    if (w.bottom <= w.top) {
        w.bottom = std::min(image_h, w.top + 1);
        w.top = w.bottom - 1;
    }
    return w;
}

OracleScorer::OracleScorer(Scalar noise_rate, std::uint64_t seed)
    : noise_rate_(noise_rate), seed_(seed) {
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) {
        throw InvalidArgument("OracleScorer: noise_rate must lie in [0, 1)");
    }
}

Scalar OracleScorer::score(const ScoreRequest& request) const {
    check_request(request);
    const GroundingRecord& rec = *request.record;
    const PatchGrid& grid = record_grid(rec);
    const bool inside =
        point_in_bbox(request.point, rec.gt_bbox, grid.image_w_px, grid.image_h_px);

    bool flip = false;
    if (noise_rate_ > 0.0) {
        // Key the flip on (seed, record id, exact point bits): re-querying a
        // point reproduces it, distinct points draw independently, and the
        // crop size plays no part.
        std::uint64_t h = fnv1a(&seed_, sizeof seed_);
        h = fnv1a(rec.id, h);
        h = fnv1a_bits(request.point.x, h);
        h = fnv1a_bits(request.point.y, h);
        const Scalar u =
            static_cast<Scalar>(splitmix64(h) >> 11) * 0x1.0p-53;
        flip = u < noise_rate_;
    }
    const bool positive = inside != flip;
    return positive ? 1.0 : 0.0;
}

ToyVerifier::ToyVerifier(EncoderParams encoder, Vector weights)
    : encoder_(std::move(encoder)), weights_(std::move(weights)) {
    const int want = feature_dim(encoder_.dim());
    if (static_cast<int>(weights_.size()) != want) {
        throw InvalidArgument("ToyVerifier: weight size does not match feature dimension");
    }
}

Vector ToyVerifier::features(const ScoreRequest& request) const {
    check_request(request);
    const GroundingRecord& rec = *request.record;
    const FeatureSet fs = encode_record(rec, encoder_);
    const PatchGrid& grid = fs.grid;
    const int d = fs.dim();

    const int col = std::clamp(static_cast<int>(std::floor(request.point.x / grid.patch_px)), 0,
                               grid.cols - 1);
    const int row = std::clamp(static_cast<int>(std::floor(request.point.y / grid.patch_px)), 0,
                               grid.rows - 1);
    const Vector v_at = fs.patch_features.col(grid.index(col, row));

    // Mean feature over patches whose centers fall in the crop: the local
    // context the crop would show a real verifier.
    Vector v_pool = Vector::Zero(d);
    int pooled = 0;
    for (int i = 0; i < grid.patch_count(); ++i) {
        const PixelPoint c = patch_center_px(i, grid);
        if (c.x >= request.crop.left && c.x < request.crop.right && c.y >= request.crop.top &&
            c.y < request.crop.bottom) {
            v_pool += fs.patch_features.col(i);
            ++pooled;
        }
    }
    if (pooled > 0) {
        v_pool /= static_cast<Scalar>(pooled);
    } else {
        v_pool = v_at; // crop smaller than a patch: fall back to the marked patch
    }

    Vector phi(feature_dim(d));
    Eigen::Map<Matrix>(phi.data(), d, d) = v_at * fs.anchor.transpose();
    Eigen::Map<Matrix>(phi.data() + d * d, d, d) = v_pool * fs.anchor.transpose();

    // Marked point's offset from the crop center, in crop widths.
    const Scalar cw = static_cast<Scalar>(request.crop.right - request.crop.left);
    const Scalar ch = static_cast<Scalar>(request.crop.bottom - request.crop.top);
    phi[2 * d * d] = (request.point.x - 0.5 * (request.crop.left + request.crop.right)) / cw;
    phi[2 * d * d + 1] = (request.point.y - 0.5 * (request.crop.top + request.crop.bottom)) / ch;
    phi[2 * d * d + 2] = 1.0;
    return phi;
}

Scalar ToyVerifier::score(const ScoreRequest& request) const {
    return sigmoid(weights_.dot(features(request)));
}

SelectionResult select(const CandidateSet& candidates, const GroundingRecord& record,
                       const Scorer& scorer, const SelectionConfig& cfg) {
    if (candidates.candidates.empty()) throw InvalidArgument("select: empty candidate set");
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) {
        throw InvalidArgument("select: gamma must lie in [0, 1]");
    }
    if (cfg.use_aggregation && cfg.agg_crops.empty()) {
        throw InvalidArgument("select: aggregation requested with no crop sizes");
    }

    const PatchGrid& grid = record_grid(record);
    SelectionResult result;
    Scalar best_score = -1.0;
    std::size_t best_index = 0;

    for (std::size_t i = 0; i < candidates.candidates.size(); ++i) {
        const CandidatePoint& cand = candidates.candidates[i];
        const Scalar s = aggregate_or_single(record, cand.point_px, scorer, cfg, grid.image_w_px,
                                             grid.image_h_px, result.failure_count);
        ++result.evaluated_count;
        if (s > cfg.gamma) {
            result.chosen = cand;
            result.score = s;
            result.early_exit = true;
            return result;
        }
        if (s > best_score) { // strict: ties keep the earlier candidate
            best_score = s;
            best_index = i;
        }
    }

    result.chosen = candidates.candidates[best_index];
    result.score = best_score;
    result.fallback_used = true;
    return result;
}

Scalar self_aggregate_score(const GroundingRecord& record, const PixelPoint& point,
                            const Scorer& scorer, const std::vector<int>& agg_crops) {
    if (agg_crops.empty()) throw InvalidArgument("self_aggregate_score: no crop sizes");
    const PatchGrid& grid = record_grid(record);
    int failures = 0;
    Scalar total = 0.0;
    for (const int c : agg_crops) {
        total += guarded_score(record, point, scorer, c, grid.image_w_px, grid.image_h_px,
                               failures);
    }
    return total / static_cast<Scalar>(agg_crops.size());
}

ToyVerifier train_toy_verifier(const std::vector<VerifierExample>& examples,
                               const EncoderParams& encoder, const VerifierTrainConfig& cfg) {
    if (examples.empty()) throw InvalidArgument("train_toy_verifier: no examples");
    if (cfg.learning_rate <= 0.0) throw InvalidArgument("train_toy_verifier: learning rate");
    if (cfg.epochs < 1) throw InvalidArgument("train_toy_verifier: epochs must be >= 1");
    if (cfg.batch_size < 1) throw InvalidArgument("train_toy_verifier: batch_size must be >= 1");

    bool seen_pos = false, seen_neg = false;
    for (const VerifierExample& ex : examples) (ex.label ? seen_pos : seen_neg) = true;
    if (!seen_pos || !seen_neg) {
        throw DegenerateLabels("train_toy_verifier: examples carry a single label class");
    }

    const int d = encoder.dim();
    const int fdim = ToyVerifier::feature_dim(d);
    const int n = static_cast<int>(examples.size());
    ToyVerifier scratch(encoder, Vector::Zero(fdim));

    // Features are fixed while the verifier trains (the encoder is not
    // updated here), so compute each example's phi once up front.
    Matrix phi(fdim, n);
    std::vector<char> labels(n);
    for (int i = 0; i < n; ++i) {
        const VerifierExample& ex = examples[i];
        const PatchGrid& grid = record_grid(ex.record);
        ScoreRequest request;
        request.record = &ex.record;
        request.point = ex.point;
        request.crop = crop_window(ex.point, cfg.crop_px, grid.image_w_px, grid.image_h_px);
        phi.col(i) = scratch.features(request);
        labels[i] = ex.label ? 1 : 0;
    }

    Vector w = Vector::Zero(fdim);
    Vector adam_m = Vector::Zero(fdim);
    Vector adam_v = Vector::Zero(fdim);
    const Scalar beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int t = 0;

    Rng order_rng(mix_seed(cfg.seed, kStreamVerifierOrder));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order.begin(), order.end());
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - start);
            Vector grad = Vector::Zero(fdim);
            for (int b = 0; b < count; ++b) {
                const int i = order[start + b];
                const Scalar p = sigmoid(w.dot(phi.col(i)));
                grad += (p - static_cast<Scalar>(labels[i])) * phi.col(i);
            }
            grad /= static_cast<Scalar>(count);

            ++t;
            adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
            adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseProduct(grad);
            const Scalar mc = 1.0 - std::pow(beta1, t);
            const Scalar vc = 1.0 - std::pow(beta2, t);
            w.array() -=
                cfg.learning_rate * (adam_m.array() / mc) / ((adam_v.array() / vc).sqrt() + adam_eps);
        }
    }
    return ToyVerifier(encoder, std::move(w));
}

Scalar verifier_loss(const ToyVerifier& verifier, const std::vector<VerifierExample>& examples,
                     int crop_px) {
    if (examples.empty()) throw InvalidArgument("verifier_loss: no examples");
    Scalar total = 0.0;
    for (const VerifierExample& ex : examples) {
        const PatchGrid& grid = record_grid(ex.record);
        ScoreRequest request;
        request.record = &ex.record;
        request.point = ex.point;
        request.crop = crop_window(ex.point, crop_px, grid.image_w_px, grid.image_h_px);
        const Scalar z = verifier.weights().dot(verifier.features(request));
        total += logistic_ce(z, ex.label);
    }
    return total / static_cast<Scalar>(examples.size());
}

Vector verifier_loss_gradient(const ToyVerifier& verifier,
                              const std::vector<VerifierExample>& examples, int crop_px) {
    if (examples.empty()) throw InvalidArgument("verifier_loss_gradient: no examples");
    Vector grad = Vector::Zero(verifier.weights().size());
    for (const VerifierExample& ex : examples) {
        const PatchGrid& grid = record_grid(ex.record);
        ScoreRequest request;
        request.record = &ex.record;
        request.point = ex.point;
        request.crop = crop_window(ex.point, crop_px, grid.image_w_px, grid.image_h_px);
        const Vector phi = verifier.features(request);
        const Scalar p = sigmoid(verifier.weights().dot(phi));
        grad += (p - (ex.label ? 1.0 : 0.0)) * phi;
    }
    return grad / static_cast<Scalar>(examples.size());
}

Scalar verifier_accuracy(const ToyVerifier& verifier,
                         const std::vector<VerifierExample>& examples, int crop_px) {
    if (examples.empty()) throw InvalidArgument("verifier_accuracy: no examples");
    int correct = 0;
    for (const VerifierExample& ex : examples) {
        const PatchGrid& grid = record_grid(ex.record);
        ScoreRequest request;
        request.record = &ex.record;
        request.point = ex.point;
        request.crop = crop_window(ex.point, crop_px, grid.image_w_px, grid.image_h_px);
        const Scalar z = verifier.weights().dot(verifier.features(request));
        if ((z > 0.0) == ex.label) ++correct;
    }
    return static_cast<Scalar>(correct) / static_cast<Scalar>(examples.size());
}

} // namespace patch_actor
