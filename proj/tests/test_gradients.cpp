#include <doctest.h>

#include "patch_actor/actionhead.hpp"
#include "patch_actor/rng.hpp"

#include <cmath>
#include <vector>

using namespace patch_actor;

namespace {

// Mutable views over every head parameter, in a fixed order matching
// gradient_entries below.
std::vector<Scalar*> param_entries(ActionHeadParams& p) {
    std::vector<Scalar*> out;
    auto add = [&](auto& tensor) {
        for (Eigen::Index i = 0; i < tensor.size(); ++i) out.push_back(tensor.data() + i);
    };
    add(p.wq);
    add(p.wk);
    add(p.wv);
    add(p.mlp_anchor.w1);
    add(p.mlp_anchor.b1);
    add(p.mlp_anchor.w2);
    add(p.mlp_anchor.b2);
    add(p.mlp_patch.w1);
    add(p.mlp_patch.b1);
    add(p.mlp_patch.w2);
    add(p.mlp_patch.b2);
    return out;
}

std::vector<Scalar> gradient_entries(const HeadGradients& g) {
    std::vector<Scalar> out;
    auto add = [&](const auto& tensor) {
        for (Eigen::Index i = 0; i < tensor.size(); ++i) out.push_back(tensor.data()[i]);
    };
    add(g.wq);
    add(g.wk);
    add(g.wv);
    add(g.mlp_anchor.w1);
    add(g.mlp_anchor.b1);
    add(g.mlp_anchor.w2);
    add(g.mlp_anchor.b2);
    add(g.mlp_patch.w1);
    add(g.mlp_patch.b1);
    add(g.mlp_patch.w2);
    add(g.mlp_patch.b2);
    return out;
}

Scalar loss_of(const ActionHeadParams& p, const FeatureSet& fs, const TargetDistribution& t) {
    return kl_loss(t, cache_to_map(attention_forward(p, fs)));
}

Scalar rel_error(Scalar analytic, Scalar numeric) {
    const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    return std::abs(analytic - numeric) / denom;
}

struct Case {
    ActionHeadParams params;
    FeatureSet fs;
    TargetDistribution target;
};

Case random_case(Rng& rng, int max_d, int max_m) {
    Case c;
    const int d = static_cast<int>(rng.uniform_int(2, max_d));
    const int m = static_cast<int>(rng.uniform_int(1, max_m));
    c.params = init_action_head(d, rng.next());
    c.fs.grid = make_grid(m * 4, 4, 4);
    c.fs.patch_features.resize(d, m);
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) c.fs.patch_features(k, i) = rng.normal() * 0.8;
    }
    c.fs.anchor.resize(d);
    for (int k = 0; k < d; ++k) c.fs.anchor[k] = rng.normal() * 0.8;

    PatchMask mask;
    mask.grid = c.fs.grid;
    mask.bits = BoolArray::Constant(m, false);
    const int positives = static_cast<int>(rng.uniform_int(1, m));
    for (int j = 0; j < positives; ++j) mask.bits[rng.uniform_int(0, m - 1)] = true;
    c.target = target_from_mask(mask);
    return c;
}

// Central finite differences over every parameter entry plus the feature
// and anchor inputs. Returns the worst relative error encountered.
Scalar max_fd_error(Case& c, Scalar h) {
    const HeadGradients analytic = backward(c.params, attention_forward(c.params, c.fs), c.target);
    const std::vector<Scalar> ga = gradient_entries(analytic);
    std::vector<Scalar*> entries = param_entries(c.params);
    REQUIRE(ga.size() == entries.size());

    Scalar worst = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Scalar saved = *entries[i];
        *entries[i] = saved + h;
        const Scalar up = loss_of(c.params, c.fs, c.target);
        *entries[i] = saved - h;
        const Scalar down = loss_of(c.params, c.fs, c.target);
        *entries[i] = saved;
        worst = std::max(worst, rel_error(ga[i], (up - down) / (2.0 * h)));
    }

    // Input gradients: features then anchor.
    for (Eigen::Index i = 0; i < c.fs.patch_features.size(); ++i) {
        Scalar* entry = c.fs.patch_features.data() + i;
        const Scalar saved = *entry;
        *entry = saved + h;
        const Scalar up = loss_of(c.params, c.fs, c.target);
        *entry = saved - h;
        const Scalar down = loss_of(c.params, c.fs, c.target);
        *entry = saved;
        worst = std::max(worst, rel_error(analytic.d_features.data()[i], (up - down) / (2.0 * h)));
    }
    for (Eigen::Index i = 0; i < c.fs.anchor.size(); ++i) {
        Scalar* entry = c.fs.anchor.data() + i;
        const Scalar saved = *entry;
        *entry = saved + h;
        const Scalar up = loss_of(c.params, c.fs, c.target);
        *entry = saved - h;
        const Scalar down = loss_of(c.params, c.fs, c.target);
        *entry = saved;
        worst = std::max(worst, rel_error(analytic.d_anchor[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

} // namespace

TEST_CASE("analytic gradients match central finite differences at d=8, M=12") {
    Rng rng(31337);
    Case c = random_case(rng, 8, 12);
    // Force the exact published configuration.
    c.params = init_action_head(8, 77);
    c.fs.grid = make_grid(48, 4, 4);
    c.fs.patch_features.resize(8, 12);
    for (int i = 0; i < 12; ++i) {
        for (int k = 0; k < 8; ++k) c.fs.patch_features(k, i) = rng.normal() * 0.8;
    }
    c.fs.anchor.resize(8);
    for (int k = 0; k < 8; ++k) c.fs.anchor[k] = rng.normal() * 0.8;
    PatchMask mask;
    mask.grid = c.fs.grid;
    mask.bits = BoolArray::Constant(12, false);
    mask.bits[2] = mask.bits[3] = mask.bits[7] = true;
    c.target = target_from_mask(mask);

    CHECK(max_fd_error(c, 1e-4) < 1e-4);
}

TEST_CASE("gradient check over 50 random configurations (d<=16, M<=24)") {
    Rng rng(424242);
    Scalar worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Case c = random_case(rng, 16, 24);
        worst = std::max(worst, max_fd_error(c, 1e-4));
    }
    CAPTURE(worst);
    CHECK(worst < 1e-4);
}
