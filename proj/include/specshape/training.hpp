#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "specshape/filter_bank.hpp"
#include "specshape/filtering.hpp"
#include "specshape/laplacian.hpp"

namespace specshape {

struct TrainingConfig {
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 200;
    double alpha = 1e-3;  // smoothness penalty weight
    double beta = 1e-4;   // amplitude penalty weight
    double weight_decay = 1e-4;
    int grid_points = 64; // spectral grid for the smoothness penalty
    std::uint64_t seed = 0;
    bool carry_over_shaping = false; // transfer: start from the source shaping
                                     // instead of the spread-out init

    void validate() const;
};

/// Which parameter groups the optimizer may touch. An empty `components`
/// vector means every shaping parameter is trainable.
struct ComponentFreeze {
    bool mu = false;
    bool gamma = false;
    bool amplitude = false;
};

struct FreezeMask {
    bool baseline_frozen = false;
    std::vector<ComponentFreeze> components;

    static FreezeMask none() { return {}; }
    static FreezeMask baseline_only() { return {true, {}}; }
};

struct LossRecord {
    int epoch = 0;
    double total = 0.0;
    double data = 0.0;
    double smooth = 0.0; // alpha-weighted contribution
    double shape = 0.0;  // beta-weighted contribution
};

/// Weighted loss decomposition: total = data + smooth + shape exactly.
struct LossParts {
    double total = 0.0;
    double data = 0.0;
    double smooth = 0.0;
    double shape = 0.0;
};

struct TrainingState {
    ShapedFilterBank bank; // after fit/adapt: the best-on-train checkpoint
    ParameterGradient m;   // AdamW first moments, congruent with bank
    ParameterGradient v;   // AdamW second moments
    long long step = 0;
    std::vector<LossRecord> history;
    double best_mse = 0.0; // train-set MSE of `bank`
    int best_epoch = 0;
};

/// A filtering problem: graph operator plus aligned input/target signals,
/// with the eigendecomposition the spectral-domain loss path runs through.
struct SupervisedDataset {
    LaplacianOperator lap;
    SpectralDecomposition decomp;
    SignalBatch inputs;
    SignalBatch targets;

    int num_signals() const { return inputs.num_signals(); }
    void validate() const;
};

/// Composite objective on a batch of signal columns. The data term is
/// summed squared error computed through the spectral path; the smoothness
/// term is the mean squared second finite difference of the baseline on a
/// uniform grid over [0, lambda_max]; the shape term penalizes amplitude L2.
/// When `grad` is non-null it receives the exact gradient of the total.
LossParts loss(const ShapedFilterBank& bank, const SupervisedDataset& data,
               std::span<const int> batch_indices, const TrainingConfig& cfg,
               ParameterGradient* grad = nullptr);

/// Decoupled-weight-decay Adam update (beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8). Weight decay touches MLP weight matrices only. Frozen
/// parameters and their moments are left bit-identical.
void adamw_step(TrainingState& state, const ParameterGradient& grad,
                const FreezeMask& mask, const TrainingConfig& cfg);

/// Train a freshly initialized K-component bank on the dataset. Deterministic
/// in cfg.seed; returns the best-on-train bank with full loss history.
TrainingState fit(const SupervisedDataset& data, int K, const TrainingConfig& cfg);

/// The pre-adaptation filter: the pretrained bank re-expressed on a target
/// spectrum, with centers clamped to the target's [0, lambda_max].
ShapedFilterBank zero_shot_bank(const ShapedFilterBank& pretrained,
                                double target_lambda_max);

/// Train-set MSE (1/S sum of squared column errors) via the spectral path.
double dataset_mse(const ShapedFilterBank& bank, const SupervisedDataset& data);

struct AdaptResult {
    TrainingState state;
    ShapedFilterBank zero_shot; // the filter mse_before was measured with
    double mse_before = 0.0;
    double mse_after = 0.0;
    double improvement = 0.0; // (before - after) / before
};

/// Few-shot transfer: freeze the baseline kernel, re-initialize (or carry
/// over) the shaping parameters on the target spectrum, and adapt them only.
/// The zero-shot filter seeds the best-checkpoint tracking, so on the train
/// set adaptation never ends worse than where it started.
AdaptResult adapt(const ShapedFilterBank& pretrained,
                  const SupervisedDataset& target, const TrainingConfig& cfg);

/// FNV-1a over the baseline's parameter bytes; for freeze verification.
std::uint64_t baseline_hash(const BaselineKernel& k);

std::string checkpoint_to_json(const TrainingState& s);
TrainingState checkpoint_from_json(const std::string& text);

/// CSV with header epoch,total,data,smooth,shape.
std::string history_csv(const TrainingState& s);

} // namespace specshape
