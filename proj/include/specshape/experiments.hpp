#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "specshape/filtering.hpp"
#include "specshape/graph.hpp"
#include "specshape/training.hpp"

namespace specshape {

struct GaussianPeak {
    double center = 0.0; // in [0, lambda_max]
    double width = 1.0;  // Gaussian std dev
    double height = 1.0;
};

/// Synthetic target response: a sum of Gaussians rescaled so its maximum
/// over a 512-point grid on [0, lambda_max] equals one.
struct GroundTruthFilter {
    std::vector<GaussianPeak> peaks;
    double lambda_max = 1.0;
    double scale = 1.0;

    double response_at(double lambda) const;
    std::vector<double> response(std::span<const double> lambdas) const;
};

/// Draws peak centers with minimum separation lambda_max/(2*num_peaks),
/// widths in [lambda_max/20, lambda_max/8], heights in [0.5, 1], then
/// normalizes. Retries center placement with fresh sub-seeds, failing after
/// 100 attempts.
GroundTruthFilter make_ground_truth(int num_peaks, double lambda_max,
                                    std::uint64_t seed);

std::string ground_truth_to_json(const GroundTruthFilter& f);
GroundTruthFilter ground_truth_from_json(const std::string& text);

struct SignalRegime {
    enum class Kind { GaussianIID, SmoothLowpass, LocalizedBump, BandLimited, Diffusion };
    Kind kind = Kind::GaussianIID;
    double band_lo = 0.0; // BandLimited only
    double band_hi = 0.0;
    double t = 1.0; // Diffusion only
};

std::string regime_name(SignalRegime::Kind kind);
SignalRegime::Kind regime_kind_from_name(const std::string& name);

/// Draw S training signals under the regime. BandLimited with no eigenvalue
/// inside the band is a degenerate-input error.
SignalBatch make_signals(const SignalRegime& regime,
                         const SpectralDecomposition& decomp, int S,
                         std::uint64_t seed);

/// Standard-normal batch with no decomposition required; draws the same
/// stream as make_signals with the GaussianIID regime. The large-graph path.
SignalBatch make_gaussian_signals(int num_nodes, int S, std::uint64_t seed);

/// (1/S) * sum of squared column errors.
double mse(const SignalBatch& yhat, const SignalBatch& y);

/// (1/N) * sum of squared response gaps on the eigenvalue grid.
double spectral_discrepancy(std::span<const double> bank_response,
                            std::span<const double> gt_response);

/// (before - after) / before; before must be positive.
double improvement(double before, double after);

struct SimilarityFeatures {
    double spectral_distance = 0.0;
    double degree_correlation = 0.0;
    double clustering_similarity = 0.0;
    double path_length_similarity = 0.0;
    double density_similarity = 0.0;
    double signal_correlation = 0.0;
    double spectral_similarity = 0.0;
    double moment_similarity = 0.0;
    bool degenerate_pearson = false; // some Pearson input was constant

    static constexpr int kCount = 8;
    static const std::array<const char*, kCount>& names();
    double by_index(int i) const;
};

struct GraphView {
    const Graph* graph = nullptr;
    const SpectralDecomposition* decomp = nullptr;
    const SignalBatch* signals = nullptr;
};

/// The eight structural/signal comparison features. Pearson features on
/// constant sequences are set to 0 with the degenerate flag raised.
SimilarityFeatures similarity_features(const GraphView& source,
                                       const GraphView& target);

/// Fixed filter baseline: a Mexican-hat prototype lambda*exp(-lambda)
/// dilated over K log-spaced scales, with fixed or least-squares amplitudes.
struct FixedPrototypeBank {
    std::vector<double> scales;
    std::vector<double> amplitudes;
    double lambda_max = 1.0;

    std::vector<double> response(std::span<const double> lambdas) const;
};

FixedPrototypeBank make_fixed_prototype(int K, double lambda_max);

/// Matched-capacity variant: amplitudes solving the least-squares data term
/// on the dataset (closed form via the spectral path).
FixedPrototypeBank fit_prototype_amplitudes(const FixedPrototypeBank& proto,
                                            const SupervisedDataset& data);

/// MSE of an arbitrary spectral response on a dataset (spectral path).
double response_mse(std::span<const double> response, const SupervisedDataset& data);

/// One graph + ground truth + supervision pairs, built deterministically.
struct ExperimentDataset {
    Graph graph;
    SupervisedDataset data;
    GroundTruthFilter gt;
};

ExperimentDataset make_experiment_dataset(const FamilyParams& family,
                                          LaplacianKind kind,
                                          const SignalRegime& regime, int num_peaks,
                                          int S, std::uint64_t seed);

struct SingleGraphSpec {
    FamilyParams family;
    LaplacianKind kind = LaplacianKind::Combinatorial;
    SignalRegime regime;
    int num_peaks = 2;
    int num_signals = 64;
    std::vector<int> k_list = {1, 2};
    TrainingConfig training;
    std::uint64_t seed = 0;
};

struct ComponentSummary {
    double mu = 0.0;
    double gamma = 0.0;
    double amplitude = 0.0;
};

struct SingleGraphResult {
    int K = 0;
    double mse_adaptive = 0.0;
    double espec_adaptive = 0.0;
    double mse_fixed = 0.0;
    double espec_fixed = 0.0;
    double mse_fixed_ls = 0.0;
    double espec_fixed_ls = 0.0;
    std::vector<ComponentSummary> components;
    ShapedFilterBank bank;
};

/// Fit each K in k_list on one dataset; fixed-prototype baselines at matched
/// K ride along for comparison.
std::vector<SingleGraphResult> run_single_graph_experiment(const SingleGraphSpec& spec);

struct TransferTrialSpec {
    FamilyParams source_family;
    FamilyParams target_family;
    LaplacianKind kind = LaplacianKind::Combinatorial;
    SignalRegime source_regime;
    SignalRegime target_regime;
    int K = 4;
    int num_peaks = 2;
    int s_src = 256;
    int s_tgt = 16;
    TrainingConfig pretrain;
    TrainingConfig adaptation;
    std::uint64_t seed = 0;
    std::string label; // trial class, e.g. "er_to_er"
};

struct TransferTrialResult {
    std::string label;
    std::uint64_t seed = 0;
    double mse_before = 0.0;
    double mse_after = 0.0;
    double mse_scratch = 0.0;
    double imp = 0.0;
    double delta_t = 0.0; // (scratch - after) / scratch
    long long adapt_steps = 0;
    long long scratch_steps = 0;
    std::uint64_t baseline_hash_before = 0;
    std::uint64_t baseline_hash_after = 0;
    SimilarityFeatures features;
};

/// Pretrain on the source, measure the zero-shot filter on the target, adapt
/// the shaping, and run a matched-step from-scratch fit for reference.
TransferTrialResult run_transfer_trial(const TransferTrialSpec& spec);

struct ClassStat {
    std::string label;
    int count = 0;
    double mean_imp = 0.0;
    double stderr_imp = 0.0; // sample std / sqrt(count)
    double mean_abs_imp = 0.0;
    double mean_delta_t = 0.0;
};

struct TransferSummary {
    std::vector<ClassStat> classes;
    // Pearson of each feature against class-normalized improvement
    // (imp divided by its class's mean |imp|).
    std::array<double, SimilarityFeatures::kCount> correlations{};
    std::array<bool, SimilarityFeatures::kCount> correlation_degenerate{};
};

TransferSummary summarize_transfer(const std::vector<TransferTrialResult>& trials);

} // namespace specshape
