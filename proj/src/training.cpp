#include "patch_actor/training.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/log.hpp"
#include "patch_actor/rng.hpp"

#include <cmath>
#include <numeric>
#include <variant>

namespace patch_actor {

namespace {

constexpr std::uint64_t kStreamOrder = 0x6f726472; // "ordr"
constexpr std::uint64_t kStreamNoise = 0x6e6f6973; // must match encode()'s stream

// Adam moments for one tensor; each tensor keeps its own step count so
// bias correction stays exact for parameters that unfreeze late.
template <typename T>
struct AdamState {
    T m, v;
    int t = 0;
};

template <typename T>
void adam_step(T& param, const T& grad, AdamState<T>& s, const TrainConfig& cfg) {
    if (s.t == 0) {
        s.m = T::Zero(param.rows(), param.cols());
        s.v = T::Zero(param.rows(), param.cols());
    }
    ++s.t;
    s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
    s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const Scalar mc = 1.0 - std::pow(cfg.beta1, s.t);
    const Scalar vc = 1.0 - std::pow(cfg.beta2, s.t);
    param.array() -=
        cfg.learning_rate * (s.m.array() / mc) / ((s.v.array() / vc).sqrt() + cfg.adam_eps);
}

// Per-record compilation: everything that does not change as the encoder
// trains. Features are rebuilt per visit from the current embeddings plus
// noise regenerated from the screen's fixed stream, which reproduces
// encode() exactly without caching a d x M noise matrix per record.
struct Compiled {
    bool external = false;
    std::vector<int> classes; // patch -> class id, -1 background
    std::uint64_t noise_seed = 0;
    Scalar noise_scale = 0.0;
    int instruction = 0;
    Vector target_probs;
    Matrix ext_features;
    Vector ext_anchor;
    int m = 0;
};

Compiled compile_record(const GroundingRecord& rec, int d, Scalar epsilon) {
    const PatchGrid& grid = record_grid(rec);
    Compiled c;
    c.m = grid.patch_count();
    c.target_probs = target_from_mask(rasterize_bbox(rec.gt_bbox, grid), epsilon).probs;

    if (const auto* synth = std::get_if<SynthScreen>(&rec.screen)) {
        c.classes = patch_classes(*synth);
        c.instruction = rec.instruction;
        c.noise_seed = mix_seed(synth->seed, kStreamNoise);
        c.noise_scale = synth->background_noise_scale;
    } else {
        const auto& ext = std::get<ExternalScreen>(rec.screen);
        if (ext.patch_features.rows() != d) {
            throw InvalidArgument("train: external feature dimension mismatch");
        }
        c.external = true;
        c.ext_features = ext.patch_features;
        c.ext_anchor = ext.anchor;
    }
    return c;
}

FeatureSet materialize(const Compiled& c, const EncoderParams& enc, const PatchGrid& grid) {
    FeatureSet fs;
    fs.grid = grid;
    if (c.external) {
        fs.patch_features = c.ext_features;
        fs.anchor = c.ext_anchor;
        return fs;
    }
    const int d = enc.dim();
    fs.patch_features.resize(d, c.m);
    for (int i = 0; i < c.m; ++i) {
        fs.patch_features.col(i) =
            c.classes[i] < 0 ? enc.background_emb : enc.class_emb.col(c.classes[i]);
    }
    if (c.noise_scale > 0.0) {
        Rng noise(c.noise_seed);
        for (int i = 0; i < c.m; ++i) {
            for (int k = 0; k < d; ++k) {
                fs.patch_features(k, i) += c.noise_scale * noise.normal();
            }
        }
    }
    fs.anchor = enc.instr_emb.col(c.instruction);
    return fs;
}

struct EncoderGrads {
    Matrix class_emb;
    Vector background_emb;
    Matrix instr_emb;
};

void accumulate_encoder(EncoderGrads& g, const Compiled& c, const HeadGradients& hg) {
    if (c.external) return; // nothing to train for precomputed features
    for (int i = 0; i < c.m; ++i) {
        if (c.classes[i] < 0) {
            g.background_emb += hg.d_features.col(i);
        } else {
            g.class_emb.col(c.classes[i]) += hg.d_features.col(i);
        }
    }
    g.instr_emb.col(c.instruction) += hg.d_anchor;
}

} // namespace

TrainResult train(Model& model, const std::vector<GroundingRecord>& records,
                  const TrainConfig& cfg) {
    if (cfg.learning_rate < 0.0) throw InvalidArgument("train: negative learning rate");
    if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (cfg.warmup_epochs < 0) throw InvalidArgument("train: negative warmup");
    if (records.empty()) throw InvalidArgument("train: empty dataset");

    const int d = model.head.d;
    TrainResult result;

    std::vector<Compiled> compiled;
    std::vector<const GroundingRecord*> kept;
    compiled.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            compiled.push_back(compile_record(records[i], d, cfg.target_epsilon));
            kept.push_back(&records[i]);
        } catch (const EmptySupervision&) {
            result.rejected_indices.push_back(i);
        }
    }
    if (!result.rejected_indices.empty()) {
        PA_LOG_WARN("train: rejected %zu record(s) with empty supervision; first index %zu",
                    result.rejected_indices.size(), result.rejected_indices.front());
    }
    if (compiled.empty()) throw EmptySupervision("train: no record has a nonempty target mask");

    AdamState<Matrix> s_wq, s_wk, s_wv;
    AdamState<Matrix> s_aw1, s_aw2, s_pw1, s_pw2;
    AdamState<Vector> s_ab1, s_ab2, s_pb1, s_pb2;
    AdamState<Matrix> s_class, s_instr;
    AdamState<Vector> s_bg;

    Rng order_rng(mix_seed(cfg.seed, kStreamOrder));
    std::vector<std::size_t> order(compiled.size());
    std::iota(order.begin(), order.end(), 0);

    const int n = static_cast<int>(compiled.size());
    // Per-record losses are summed in record order at epoch end so the curve
    // does not depend on the shuffle through fp addition order.
    std::vector<Scalar> record_loss(n, 0.0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool encoder_live =
            cfg.mode == TrainMode::full && epoch >= cfg.warmup_epochs;
        order_rng.shuffle(order.begin(), order.end());
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - start);

            HeadGradients sum;
            sum.wq = Matrix::Zero(d, d);
            sum.wk = Matrix::Zero(d, d);
            sum.wv = Matrix::Zero(d, d);
            auto zero_mlp = [&](Mlp& mg) {
                mg.w1 = Matrix::Zero(d, d);
                mg.b1 = Vector::Zero(d);
                mg.w2 = Matrix::Zero(d, d);
                mg.b2 = Vector::Zero(d);
            };
            zero_mlp(sum.mlp_anchor);
            zero_mlp(sum.mlp_patch);
            EncoderGrads eg{Matrix::Zero(d, model.encoder.class_count()), Vector::Zero(d),
                            Matrix::Zero(d, model.encoder.class_count())};

            for (int b = 0; b < count; ++b) {
                const Compiled& c = compiled[order[start + b]];
                const PatchGrid& grid = record_grid(*kept[order[start + b]]);
                const FeatureSet fs = materialize(c, model.encoder, grid);
                const ForwardCache cache = attention_forward(model.head, fs);

                TargetDistribution target;
                target.grid = grid;
                target.probs = c.target_probs;
                target.epsilon = cfg.target_epsilon;
                record_loss[order[start + b]] = kl_loss(target, cache_to_map(cache));

                const HeadGradients hg = backward(model.head, cache, target);
                sum.wq += hg.wq;
                sum.wk += hg.wk;
                sum.wv += hg.wv;
                sum.mlp_anchor.w1 += hg.mlp_anchor.w1;
                sum.mlp_anchor.b1 += hg.mlp_anchor.b1;
                sum.mlp_anchor.w2 += hg.mlp_anchor.w2;
                sum.mlp_anchor.b2 += hg.mlp_anchor.b2;
                sum.mlp_patch.w1 += hg.mlp_patch.w1;
                sum.mlp_patch.b1 += hg.mlp_patch.b1;
                sum.mlp_patch.w2 += hg.mlp_patch.w2;
                sum.mlp_patch.b2 += hg.mlp_patch.b2;
                if (encoder_live) accumulate_encoder(eg, c, hg);
            }

            const Scalar inv = 1.0 / count;
            adam_step(model.head.wq, Matrix(sum.wq * inv), s_wq, cfg);
            adam_step(model.head.wk, Matrix(sum.wk * inv), s_wk, cfg);
            adam_step(model.head.wv, Matrix(sum.wv * inv), s_wv, cfg);
            adam_step(model.head.mlp_anchor.w1, Matrix(sum.mlp_anchor.w1 * inv), s_aw1, cfg);
            adam_step(model.head.mlp_anchor.b1, Vector(sum.mlp_anchor.b1 * inv), s_ab1, cfg);
            adam_step(model.head.mlp_anchor.w2, Matrix(sum.mlp_anchor.w2 * inv), s_aw2, cfg);
            adam_step(model.head.mlp_anchor.b2, Vector(sum.mlp_anchor.b2 * inv), s_ab2, cfg);
            adam_step(model.head.mlp_patch.w1, Matrix(sum.mlp_patch.w1 * inv), s_pw1, cfg);
            adam_step(model.head.mlp_patch.b1, Vector(sum.mlp_patch.b1 * inv), s_pb1, cfg);
            adam_step(model.head.mlp_patch.w2, Matrix(sum.mlp_patch.w2 * inv), s_pw2, cfg);
            adam_step(model.head.mlp_patch.b2, Vector(sum.mlp_patch.b2 * inv), s_pb2, cfg);
            if (encoder_live) {
                adam_step(model.encoder.class_emb, Matrix(eg.class_emb * inv), s_class, cfg);
                adam_step(model.encoder.background_emb, Vector(eg.background_emb * inv), s_bg, cfg);
                adam_step(model.encoder.instr_emb, Matrix(eg.instr_emb * inv), s_instr, cfg);
            }
        }
        Scalar epoch_loss = 0.0;
        for (const Scalar l : record_loss) epoch_loss += l;
        result.epoch_mean_loss.push_back(epoch_loss / n);
        PA_LOG_INFO("train: epoch %d mean loss %.6f", epoch, result.epoch_mean_loss.back());
    }
    return result;
}

} // namespace patch_actor
