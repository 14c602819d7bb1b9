#pragma once

#include "patch_actor/geometry.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/types.hpp"

#include <cstdint>

namespace patch_actor {

/// Two-layer perceptron, hidden width = d, tanh between the layers.
struct Mlp {
    Matrix w1; // d x d
    Vector b1; // d
    Matrix w2; // d x d
    Vector b2; // d
};

/// Action-head parameters: one self-attention layer over patch features and
/// the two projections mapping anchor / contextual patch features into the
/// shared scoring space.
struct ActionHeadParams {
    int d = 0;
    Matrix wq, wk, wv; // d x d each
    Mlp mlp_anchor;    // scores the instruction anchor
    Mlp mlp_patch;     // scores each contextual patch feature

    bool finite() const;
};

/// Softmax attention of the anchor over all patches: the grounding output.
struct AttentionMap {
    PatchGrid grid;
    Vector raw_scores; // alpha_i, pre-softmax
    Vector weights;    // a_i = softmax(alpha)_i, sums to 1
};

/// Every intermediate of one forward pass, kept for the analytic backward.
struct ForwardCache {
    PatchGrid grid;
    Matrix v;             // d x M input patch features
    Vector anchor;        // d
    Matrix q, k, u;       // d x M projections
    Matrix attn;          // M x M row-softmax, row i = query i's attention
    Matrix ctx;           // d x M contextual features
    Matrix h_patch;       // d x M tanh hidden of the patch mlp
    Matrix z_patch;       // d x M patch scoring vectors
    Vector h_anchor;      // d
    Vector z_anchor;      // d
    Vector alpha;         // M raw scores
    Vector weights;       // M softmax weights
};

/// Gradients of the loss wrt every head parameter, plus the gradients that
/// flow back into the inputs (used to train encoder embeddings).
struct HeadGradients {
    Matrix wq, wk, wv;
    Mlp mlp_anchor;
    Mlp mlp_patch;
    Matrix d_features; // d x M
    Vector d_anchor;   // d
};

/// Uniform(-0.5, 0.5)/sqrt(d) weights, zero biases.
ActionHeadParams init_action_head(int d, std::uint64_t seed);

/// Identity-seeded variant used for training: value/projection matrices and
/// both MLPs start at (jittered) identity so each patch's own feature
/// survives the context mixing, and the query/key gain is sized so patches
/// sharing an embedding column already attend to each other. A plain random
/// init leaves every context vector equal to the global mean, a saddle that
/// gradient descent escapes only very slowly.
ActionHeadParams init_action_head_identity(int d, std::uint64_t seed);

/// Numerically stable softmax; the output sums to 1 within 1e-9.
Vector softmax(const Vector& logits);

/// Single-head scaled dot-product self-attention without positional
/// encodings: out_i = sum_j softmax_j((Wq v_i)·(Wk v_j)/sqrt(d)) Wv v_j.
Matrix self_attention(const ActionHeadParams& params, const Matrix& patch_features);

/// Scores every contextual feature against the anchor:
/// alpha_i = MLP_T(anchor)·MLP_V(ctx_i)/sqrt(d), weights = softmax(alpha).
AttentionMap attend(const ActionHeadParams& params, const Vector& anchor,
                    const Matrix& contextual_features, const PatchGrid& grid);

/// Full forward pass with all intermediates cached.
ForwardCache attention_forward(const ActionHeadParams& params, const FeatureSet& features);

AttentionMap cache_to_map(const ForwardCache& cache);

/// KL(target || attention) summed over positive-target patches; attention
/// weights are clamped to >= 1e-30 before the log.
Scalar kl_loss(const TargetDistribution& target, const AttentionMap& map);

/// Exact analytic gradients of kl_loss through the whole forward pass.
HeadGradients backward(const ActionHeadParams& params, const ForwardCache& cache,
                       const TargetDistribution& target);

/// Grounding model: toy encoder plus action head.
struct Model {
    EncoderParams encoder;
    ActionHeadParams head;
};

Model init_model(int d, int class_count, std::uint64_t seed);

/// Attention map for one record under the model.
AttentionMap ground(const Model& model, const GroundingRecord& record);

} // namespace patch_actor
