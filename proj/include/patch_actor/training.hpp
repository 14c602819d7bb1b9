#pragma once

#include "patch_actor/actionhead.hpp"
#include "patch_actor/synthgui.hpp"

#include <cstdint>
#include <vector>

namespace patch_actor {

enum class TrainMode { full, lite };

/// full: one warm-up epoch trains the head alone, then the encoder
/// embeddings unfreeze. lite: the encoder stays frozen for the whole run.
struct TrainConfig {
    Scalar learning_rate = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar adam_eps = 1e-8;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::full;
    int warmup_epochs = 1;
    Scalar target_epsilon = kDefaultTargetEpsilon;
};

struct TrainResult {
    std::vector<Scalar> epoch_mean_loss;
    std::vector<std::size_t> rejected_indices; // records with empty supervision
};

/// Adam over the head (and, when unfrozen, the encoder embeddings),
/// minimizing the mean per-record KL between the rasterized target and the
/// attention map. Deterministic per (model, records, config).
TrainResult train(Model& model, const std::vector<GroundingRecord>& records,
                  const TrainConfig& cfg);

} // namespace patch_actor
