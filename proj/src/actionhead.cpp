#include "patch_actor/actionhead.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/rng.hpp"

#include <cmath>

namespace patch_actor {

namespace {

constexpr std::uint64_t kStreamEncoder = 0x656e63; // "enc"
constexpr std::uint64_t kStreamHead = 0x686561;    // "hea"

Matrix draw_matrix(Rng& rng, int rows, int cols, Scalar scale) {
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-0.5, 0.5) * scale;
    }
    return m;
}

Mlp init_mlp(Rng& rng, int d, Scalar scale) {
    Mlp mlp;
    mlp.w1 = draw_matrix(rng, d, d, scale);
    mlp.b1 = Vector::Zero(d);
    mlp.w2 = draw_matrix(rng, d, d, scale);
    mlp.b2 = Vector::Zero(d);
    return mlp;
}

void check_dim(const ActionHeadParams& p, Eigen::Index rows, const char* who) {
    if (rows != p.d) throw InvalidArgument(std::string(who) + ": feature dimension mismatch");
}

// Columnwise two-layer perceptron: w2 * tanh(w1 * x + b1) + b2.
void mlp_forward(const Mlp& mlp, const Matrix& x, Matrix& hidden, Matrix& out) {
    hidden = ((mlp.w1 * x).colwise() + mlp.b1).array().tanh();
    out = (mlp.w2 * hidden).colwise() + mlp.b2;
}

} // namespace

bool ActionHeadParams::finite() const {
    auto ok = [](const Matrix& m) { return m.allFinite(); };
    return ok(wq) && ok(wk) && ok(wv) && ok(mlp_anchor.w1) && ok(mlp_anchor.w2) &&
           ok(mlp_patch.w1) && ok(mlp_patch.w2) && mlp_anchor.b1.allFinite() &&
           mlp_anchor.b2.allFinite() && mlp_patch.b1.allFinite() && mlp_patch.b2.allFinite();
}

ActionHeadParams init_action_head(int d, std::uint64_t seed) {
    if (d < 1) throw InvalidArgument("init_action_head: d must be >= 1");
    Rng rng(seed);
    const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(d));
    ActionHeadParams p;
    p.d = d;
    p.wq = draw_matrix(rng, d, d, scale);
    p.wk = draw_matrix(rng, d, d, scale);
    p.wv = draw_matrix(rng, d, d, scale);
    p.mlp_anchor = init_mlp(rng, d, scale);
    p.mlp_patch = init_mlp(rng, d, scale);
    return p;
}

ActionHeadParams init_action_head_identity(int d, std::uint64_t seed) {
    if (d < 1) throw InvalidArgument("init_action_head_identity: d must be >= 1");
    Rng rng(seed);
    const Scalar jitter = 0.1 / std::sqrt(static_cast<Scalar>(d));
    const Matrix eye = Matrix::Identity(d, d);

    // Without a residual path, a small random init collapses every patch's
    // context to the global mean and training stalls there. Starting the
    // value and projection matrices at the identity keeps each patch's own
    // feature flowing through, and the query/key gain is sized so that two
    // patches built from the same embedding column (squared norm ~1/12 under
    // the uniform(-0.5,0.5)/sqrt(d) embedding init) score about two nats
    // above unrelated pairs from the very first step.
    const Scalar gain = std::sqrt(24.0 * std::sqrt(static_cast<Scalar>(d)));

    ActionHeadParams p;
    p.d = d;
    p.wq = gain * eye + draw_matrix(rng, d, d, jitter);
    p.wk = gain * eye + draw_matrix(rng, d, d, jitter);
    p.wv = eye + draw_matrix(rng, d, d, jitter);
    p.mlp_anchor = init_mlp(rng, d, jitter);
    p.mlp_anchor.w1 += eye;
    p.mlp_anchor.w2 += eye;
    p.mlp_patch = init_mlp(rng, d, jitter);
    p.mlp_patch.w1 += eye;
    p.mlp_patch.w2 += eye;
    return p;
}

Vector softmax(const Vector& logits) {
    if (logits.size() == 0) throw InvalidArgument("softmax: empty input");
    const Vector shifted = logits.array() - logits.maxCoeff();
    Vector e = shifted.array().exp();
    return e / e.sum();
}

Matrix self_attention(const ActionHeadParams& params, const Matrix& patch_features) {
    check_dim(params, patch_features.rows(), "self_attention");
    if (patch_features.cols() < 1) throw InvalidArgument("self_attention: no patches");

    const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(params.d));
    const Matrix q = params.wq * patch_features;
    const Matrix k = params.wk * patch_features;
    const Matrix u = params.wv * patch_features;
    Matrix scores = (q.transpose() * k) * inv_sqrt_d; // (i,j) = query i vs key j
    Matrix attn(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        attn.row(i) = softmax(scores.row(i).transpose()).transpose();
    }
    return u * attn.transpose();
}

AttentionMap attend(const ActionHeadParams& params, const Vector& anchor,
                    const Matrix& contextual_features, const PatchGrid& grid) {
    check_dim(params, anchor.size(), "attend");
    check_dim(params, contextual_features.rows(), "attend");
    if (contextual_features.cols() != grid.patch_count()) {
        throw InvalidArgument("attend: patch count does not match grid");
    }

    Matrix h, z;
    mlp_forward(params.mlp_patch, contextual_features, h, z);
    const Vector h_a = ((params.mlp_anchor.w1 * anchor) + params.mlp_anchor.b1).array().tanh();
    const Vector z_a = params.mlp_anchor.w2 * h_a + params.mlp_anchor.b2;

    AttentionMap map;
    map.grid = grid;
    map.raw_scores = (z.transpose() * z_a) / std::sqrt(static_cast<Scalar>(params.d));
    if (!map.raw_scores.allFinite()) throw NumericalError("attend: non-finite attention scores");
    map.weights = softmax(map.raw_scores);
    if (!map.weights.allFinite()) throw NumericalError("attend: non-finite attention weights");
    return map;
}

ForwardCache attention_forward(const ActionHeadParams& params, const FeatureSet& features) {
    check_dim(params, features.patch_features.rows(), "attention_forward");
    check_dim(params, features.anchor.size(), "attention_forward");
    const int m = features.grid.patch_count();
    if (features.patch_features.cols() != m || m < 1) {
        throw InvalidArgument("attention_forward: patch count does not match grid");
    }
    const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(params.d));

    ForwardCache c;
    c.grid = features.grid;
    c.v = features.patch_features;
    c.anchor = features.anchor;
    c.q = params.wq * c.v;
    c.k = params.wk * c.v;
    c.u = params.wv * c.v;

    Matrix scores = (c.q.transpose() * c.k) * inv_sqrt_d;
    c.attn.resize(m, m);
    for (int i = 0; i < m; ++i) {
        c.attn.row(i) = softmax(scores.row(i).transpose()).transpose();
    }
    c.ctx = c.u * c.attn.transpose();

    mlp_forward(params.mlp_patch, c.ctx, c.h_patch, c.z_patch);
    c.h_anchor = ((params.mlp_anchor.w1 * c.anchor) + params.mlp_anchor.b1).array().tanh();
    c.z_anchor = params.mlp_anchor.w2 * c.h_anchor + params.mlp_anchor.b2;

    c.alpha = (c.z_patch.transpose() * c.z_anchor) * inv_sqrt_d;
    if (!c.alpha.allFinite()) throw NumericalError("attention_forward: non-finite scores");
    c.weights = softmax(c.alpha);
    return c;
}

AttentionMap cache_to_map(const ForwardCache& cache) {
    return {cache.grid, cache.alpha, cache.weights};
}

Scalar kl_loss(const TargetDistribution& target, const AttentionMap& map) {
    if (target.probs.size() != map.weights.size()) {
        throw InvalidArgument("kl_loss: target and map sizes differ");
    }
    Scalar loss = 0.0;
    for (Eigen::Index i = 0; i < target.probs.size(); ++i) {
        const Scalar p = target.probs[i];
        if (p <= 0.0) continue;
        const Scalar a = std::max(map.weights[i], 1e-30);
        loss += p * (std::log(p) - std::log(a));
    }
    return loss;
}

HeadGradients backward(const ActionHeadParams& params, const ForwardCache& cache,
                       const TargetDistribution& target) {
    const int m = static_cast<int>(cache.weights.size());
    if (target.probs.size() != m) throw InvalidArgument("backward: target size mismatch");
    const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(params.d));

    // d kl_loss / d alpha_j = (sum_i p_i) a_j - p_j.
    const Scalar p_total = target.probs.sum();
    const Vector g_alpha = p_total * cache.weights - target.probs;

    HeadGradients g;

    // alpha_i = z_anchor . z_patch_i / sqrt(d)
    const Vector g_z_anchor = (cache.z_patch * g_alpha) * inv_sqrt_d;
    const Matrix g_z_patch = (cache.z_anchor * g_alpha.transpose()) * inv_sqrt_d; // d x M

    // Patch mlp backward (batched over columns).
    g.mlp_patch.w2 = g_z_patch * cache.h_patch.transpose();
    g.mlp_patch.b2 = g_z_patch.rowwise().sum();
    const Matrix g_h_patch = params.mlp_patch.w2.transpose() * g_z_patch;
    const Matrix g_pre_patch =
        g_h_patch.array() * (1.0 - cache.h_patch.array() * cache.h_patch.array());
    g.mlp_patch.w1 = g_pre_patch * cache.ctx.transpose();
    g.mlp_patch.b1 = g_pre_patch.rowwise().sum();
    const Matrix g_ctx = params.mlp_patch.w1.transpose() * g_pre_patch;

    // Anchor mlp backward.
    g.mlp_anchor.w2 = g_z_anchor * cache.h_anchor.transpose();
    g.mlp_anchor.b2 = g_z_anchor;
    const Vector g_h_anchor = params.mlp_anchor.w2.transpose() * g_z_anchor;
    const Vector g_pre_anchor =
        g_h_anchor.array() * (1.0 - cache.h_anchor.array() * cache.h_anchor.array());
    g.mlp_anchor.w1 = g_pre_anchor * cache.anchor.transpose();
    g.mlp_anchor.b1 = g_pre_anchor;
    g.d_anchor = params.mlp_anchor.w1.transpose() * g_pre_anchor;

    // Self-attention backward. ctx = u * attn^T.
    const Matrix g_u = g_ctx * cache.attn;
    const Matrix g_attn = g_ctx.transpose() * cache.u; // M x M

    // Row-softmax backward: gS_i = a_i ∘ (gA_i - <gA_i, a_i>).
    Matrix g_scores(m, m);
    for (int i = 0; i < m; ++i) {
        const Scalar dot = g_attn.row(i).dot(cache.attn.row(i));
        g_scores.row(i) = cache.attn.row(i).array() * (g_attn.row(i).array() - dot);
    }

    const Matrix g_q = (cache.k * g_scores.transpose()) * inv_sqrt_d;
    const Matrix g_k = (cache.q * g_scores) * inv_sqrt_d;

    g.wq = g_q * cache.v.transpose();
    g.wk = g_k * cache.v.transpose();
    g.wv = g_u * cache.v.transpose();
    g.d_features =
        params.wq.transpose() * g_q + params.wk.transpose() * g_k + params.wv.transpose() * g_u;
    return g;
}

Model init_model(int d, int class_count, std::uint64_t seed) {
    Model model;
    model.encoder = init_encoder(d, class_count, mix_seed(seed, kStreamEncoder));
    model.head = init_action_head_identity(d, mix_seed(seed, kStreamHead));
    return model;
}

AttentionMap ground(const Model& model, const GroundingRecord& record) {
    const FeatureSet fs = encode_record(record, model.encoder);
    return cache_to_map(attention_forward(model.head, fs));
}

} // namespace patch_actor
