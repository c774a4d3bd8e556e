#include "specshape/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"

namespace specshape {

double GroundTruthFilter::response_at(double lambda) const {
    double acc = 0.0;
    for (const auto& p : peaks) {
        const double d = lambda - p.center;
        acc += p.height * std::exp(-d * d / (2.0 * p.width * p.width));
    }
    return scale * acc;
}

std::vector<double> GroundTruthFilter::response(std::span<const double> lambdas) const {
    std::vector<double> out(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) out[j] = response_at(lambdas[j]);
    return out;
}

GroundTruthFilter make_ground_truth(int num_peaks, double lambda_max,
                                    std::uint64_t seed) {
    if (num_peaks < 1 || num_peaks > 4)
        throw ParameterError("make_ground_truth: num_peaks must be in [1, 4]");
    if (!(lambda_max > 0.0))
        throw ParameterError("make_ground_truth: lambda_max must be > 0");

    const double min_sep = lambda_max / (2.0 * num_peaks);
    std::vector<double> centers;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        Rng rng(derive_seed(seed, 0xC0DE0000ull + attempt));
        centers.clear();
        placed = true;
        for (int i = 0; i < num_peaks; ++i) {
            const double c = rng.uniform(0.0, lambda_max);
            for (double prev : centers)
                if (std::abs(c - prev) < min_sep) {
                    placed = false;
                    break;
                }
            if (!placed) break;
            centers.push_back(c);
        }
    }
    if (!placed)
        throw NumericError("make_ground_truth: no separated center placement in 100 attempts");

    GroundTruthFilter f;
    f.lambda_max = lambda_max;
    Rng rng(derive_seed(seed, 0xC0DEFFFFull));
    for (double c : centers) {
        GaussianPeak p;
        p.center = c;
        p.width = rng.uniform(lambda_max / 20.0, lambda_max / 8.0);
        p.height = rng.uniform(0.5, 1.0);
        f.peaks.push_back(p);
    }
    f.scale = 1.0;
    double peak = 0.0;
    for (int i = 0; i < 512; ++i)
        peak = std::max(peak, f.response_at(lambda_max * i / 511.0));
    f.scale = 1.0 / peak;
    return f;
}

std::string ground_truth_to_json(const GroundTruthFilter& f) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["lambda_max"] = f.lambda_max;
    j["scale"] = f.scale;
    auto peaks = nlohmann::json::array();
    for (const auto& p : f.peaks)
        peaks.push_back(
            {{"center", p.center}, {"width", p.width}, {"height", p.height}});
    j["peaks"] = std::move(peaks);
    return j.dump(2) + "\n";
}

GroundTruthFilter ground_truth_from_json(const std::string& text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("format_version").get<int>() != 1)
            throw FormatError("ground truth json: unsupported format_version");
        GroundTruthFilter f;
        f.lambda_max = j.at("lambda_max").get<double>();
        f.scale = j.at("scale").get<double>();
        for (const auto& pj : j.at("peaks")) {
            GaussianPeak p;
            p.center = pj.at("center").get<double>();
            p.width = pj.at("width").get<double>();
            p.height = pj.at("height").get<double>();
            f.peaks.push_back(p);
        }
        if (f.peaks.empty()) throw FormatError("ground truth json: no peaks");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ground truth json: ") + e.what());
    }
}

std::string regime_name(SignalRegime::Kind kind) {
    switch (kind) {
        case SignalRegime::Kind::GaussianIID: return "gaussian_iid";
        case SignalRegime::Kind::SmoothLowpass: return "smooth_lowpass";
        case SignalRegime::Kind::LocalizedBump: return "localized_bump";
        case SignalRegime::Kind::BandLimited: return "band_limited";
        case SignalRegime::Kind::Diffusion: return "diffusion";
    }
    throw ContractError("regime_name: unknown kind");
}

SignalRegime::Kind regime_kind_from_name(const std::string& name) {
    if (name == "gaussian_iid") return SignalRegime::Kind::GaussianIID;
    if (name == "smooth_lowpass") return SignalRegime::Kind::SmoothLowpass;
    if (name == "localized_bump") return SignalRegime::Kind::LocalizedBump;
    if (name == "band_limited") return SignalRegime::Kind::BandLimited;
    if (name == "diffusion") return SignalRegime::Kind::Diffusion;
    throw ParameterError("unknown signal regime '" + name + "'");
}

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index n, Eigen::Index s) {
    Eigen::MatrixXd x(n, s);
    for (Eigen::Index col = 0; col < s; ++col)
        for (Eigen::Index row = 0; row < n; ++row) x(row, col) = rng.normal();
    return x;
}

SignalBatch filter_by_response(const SpectralDecomposition& decomp,
                               const std::vector<double>& resp,
                               Eigen::MatrixXd base) {
    return apply_exact(decomp, resp, SignalBatch(std::move(base)));
}

} // namespace

SignalBatch make_gaussian_signals(int num_nodes, int S, std::uint64_t seed) {
    if (S < 1) throw ParameterError("make_gaussian_signals: S must be >= 1");
    if (num_nodes < 1) throw ParameterError("make_gaussian_signals: empty graph");
    Rng rng(derive_seed(seed, 0x516E));
    return SignalBatch(gaussian_matrix(rng, num_nodes, S));
}

SignalBatch make_signals(const SignalRegime& regime,
                         const SpectralDecomposition& decomp, int S,
                         std::uint64_t seed) {
    if (S < 1) throw ParameterError("make_signals: S must be >= 1");
    const Eigen::Index n = decomp.eigenvalues.size();
    const double lmax = decomp.lambda_max();
    Rng rng(derive_seed(seed, 0x516E));

    switch (regime.kind) {
        case SignalRegime::Kind::GaussianIID:
            return make_gaussian_signals(static_cast<int>(n), S, seed);
        case SignalRegime::Kind::SmoothLowpass: {
            std::vector<double> resp(n);
            for (Eigen::Index j = 0; j < n; ++j)
                resp[j] = std::exp(-4.0 * decomp.eigenvalues[j] / lmax);
            return filter_by_response(decomp, resp, gaussian_matrix(rng, n, S));
        }
        case SignalRegime::Kind::LocalizedBump: {
            Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, S);
            for (int i = 0; i < S; ++i)
                onehot(static_cast<Eigen::Index>(rng.uniform_int(n)), i) = 1.0;
            std::vector<double> resp(n);
            for (Eigen::Index j = 0; j < n; ++j)
                resp[j] = std::exp(-0.5 * decomp.eigenvalues[j]);
            return filter_by_response(decomp, resp, std::move(onehot));
        }
        case SignalRegime::Kind::BandLimited: {
            if (regime.band_lo > regime.band_hi)
                throw ParameterError("make_signals: band_lo > band_hi");
            std::vector<double> resp(n);
            int inside = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const bool in = decomp.eigenvalues[j] >= regime.band_lo &&
                                decomp.eigenvalues[j] <= regime.band_hi;
                resp[j] = in ? 1.0 : 0.0;
                inside += in;
            }
            if (inside == 0)
                throw DegenerateInputError("make_signals: no eigenvalue inside band");
            return filter_by_response(decomp, resp, gaussian_matrix(rng, n, S));
        }
        case SignalRegime::Kind::Diffusion: {
            if (regime.t < 0.0) throw ParameterError("make_signals: diffusion t < 0");
            std::vector<double> resp(n);
            for (Eigen::Index j = 0; j < n; ++j)
                resp[j] = std::exp(-regime.t * decomp.eigenvalues[j]);
            return filter_by_response(decomp, resp, gaussian_matrix(rng, n, S));
        }
    }
    throw ContractError("make_signals: unknown regime");
}

double mse(const SignalBatch& yhat, const SignalBatch& y) {
    if (yhat.values.rows() != y.values.rows() || yhat.values.cols() != y.values.cols())
        throw ContractError("mse: shape mismatch");
    return (yhat.values - y.values).squaredNorm() / y.num_signals();
}

double spectral_discrepancy(std::span<const double> bank_response,
                            std::span<const double> gt_response) {
    if (bank_response.size() != gt_response.size())
        throw ContractError("spectral_discrepancy: length mismatch");
    if (bank_response.empty())
        throw ContractError("spectral_discrepancy: empty responses");
    double acc = 0.0;
    for (std::size_t j = 0; j < bank_response.size(); ++j) {
        const double d = bank_response[j] - gt_response[j];
        acc += d * d;
    }
    return acc / bank_response.size();
}

double improvement(double before, double after) {
    if (!(before > 0.0))
        throw DegenerateInputError("improvement: before must be > 0");
    return (before - after) / before;
}

std::vector<double> FixedPrototypeBank::response(std::span<const double> lambdas) const {
    std::vector<double> out(lambdas.size(), 0.0);
    for (std::size_t k = 0; k < scales.size(); ++k)
        for (std::size_t j = 0; j < lambdas.size(); ++j) {
            const double z = scales[k] * lambdas[j];
            out[j] += amplitudes[k] * z * std::exp(-z);
        }
    return out;
}

FixedPrototypeBank make_fixed_prototype(int K, double lambda_max) {
    if (K < 1) throw ParameterError("make_fixed_prototype: K must be >= 1");
    if (!(lambda_max > 0.0))
        throw ParameterError("make_fixed_prototype: lambda_max must be > 0");
    FixedPrototypeBank b;
    b.lambda_max = lambda_max;
    // Atom k peaks at lambda = 1/scale_k; peaks log-spaced across the band.
    const double lo = lambda_max / 10.0;
    const double hi = lambda_max * 0.9;
    for (int k = 0; k < K; ++k) {
        const double u = K == 1 ? 0.5 : static_cast<double>(k) / (K - 1);
        const double peak = lo * std::pow(hi / lo, u);
        b.scales.push_back(1.0 / peak);
        b.amplitudes.push_back(1.0 / K);
    }
    return b;
}

FixedPrototypeBank fit_prototype_amplitudes(const FixedPrototypeBank& proto,
                                            const SupervisedDataset& data) {
    const Eigen::Index n = data.decomp.eigenvalues.size();
    const Eigen::Index s = data.inputs.values.cols();
    const int K = static_cast<int>(proto.scales.size());
    const std::vector<double> lambdas(data.decomp.eigenvalues.data(),
                                      data.decomp.eigenvalues.data() + n);

    // Least squares over amplitudes: columns of the design are the spectral
    // coefficients of each atom applied to the inputs.
    const Eigen::MatrixXd cx = data.decomp.eigenvectors.transpose() * data.inputs.values;
    const Eigen::MatrixXd cy = data.decomp.eigenvectors.transpose() * data.targets.values;
    Eigen::MatrixXd design(n * s, K);
    for (int k = 0; k < K; ++k) {
        FixedPrototypeBank atom;
        atom.lambda_max = proto.lambda_max;
        atom.scales = {proto.scales[k]};
        atom.amplitudes = {1.0};
        const std::vector<double> r = atom.response(lambdas);
        Eigen::MatrixXd scaled = cx;
        for (Eigen::Index j = 0; j < n; ++j) scaled.row(j) *= r[j];
        design.col(k) = Eigen::Map<const Eigen::VectorXd>(scaled.data(), n * s);
    }
    const Eigen::Map<const Eigen::VectorXd> target(cy.data(), n * s);
    const Eigen::VectorXd a =
        (design.transpose() * design)
            .ldlt()
            .solve(design.transpose() * target);

    FixedPrototypeBank out = proto;
    for (int k = 0; k < K; ++k) out.amplitudes[k] = a[k];
    return out;
}

double response_mse(std::span<const double> response, const SupervisedDataset& data) {
    const SignalBatch yhat = apply_exact(data.decomp, response, data.inputs);
    return mse(yhat, data.targets);
}

ExperimentDataset make_experiment_dataset(const FamilyParams& family,
                                          LaplacianKind kind,
                                          const SignalRegime& regime, int num_peaks,
                                          int S, std::uint64_t seed) {
    Graph graph = generate_graph(family, derive_seed(seed, 1));
    LaplacianOperator lap = build_laplacian(graph, kind);
    SpectralDecomposition decomp = decompose(lap);
    GroundTruthFilter gt =
        make_ground_truth(num_peaks, decomp.lambda_max(), derive_seed(seed, 2));
    SignalBatch inputs = make_signals(regime, decomp, S, derive_seed(seed, 3));
    const std::vector<double> lambdas(decomp.eigenvalues.data(),
                                      decomp.eigenvalues.data() +
                                          decomp.eigenvalues.size());
    SignalBatch targets = apply_exact(decomp, gt.response(lambdas), inputs);
    ExperimentDataset out{std::move(graph),
                          SupervisedDataset{std::move(lap), std::move(decomp),
                                            std::move(inputs), std::move(targets)},
                          std::move(gt)};
    out.data.validate();
    return out;
}

std::vector<SingleGraphResult> run_single_graph_experiment(const SingleGraphSpec& spec) {
    const ExperimentDataset ds =
        make_experiment_dataset(spec.family, spec.kind, spec.regime, spec.num_peaks,
                                spec.num_signals, spec.seed);
    const Eigen::Index n = ds.data.decomp.eigenvalues.size();
    const std::vector<double> lambdas(ds.data.decomp.eigenvalues.data(),
                                      ds.data.decomp.eigenvalues.data() + n);
    const std::vector<double> gt_resp = ds.gt.response(lambdas);

    std::vector<SingleGraphResult> results;
    for (int K : spec.k_list) {
        TrainingConfig cfg = spec.training;
        cfg.seed = derive_seed(spec.seed, 0xF17000ull + K);
        const TrainingState state = fit(ds.data, K, cfg);

        SingleGraphResult r;
        r.K = K;
        r.bank = state.bank;
        r.mse_adaptive = state.best_mse;
        r.espec_adaptive = spectral_discrepancy(state.bank.response(lambdas), gt_resp);
        for (const auto& c : state.bank.components)
            r.components.push_back(
                {c.mu(state.bank.lambda_max), c.gamma(), c.amplitude});

        const FixedPrototypeBank fixed =
            make_fixed_prototype(K, ds.data.decomp.lambda_max());
        const FixedPrototypeBank fixed_ls = fit_prototype_amplitudes(fixed, ds.data);
        const std::vector<double> fr = fixed.response(lambdas);
        const std::vector<double> flr = fixed_ls.response(lambdas);
        r.mse_fixed = response_mse(fr, ds.data);
        r.espec_fixed = spectral_discrepancy(fr, gt_resp);
        r.mse_fixed_ls = response_mse(flr, ds.data);
        r.espec_fixed_ls = spectral_discrepancy(flr, gt_resp);
        results.push_back(std::move(r));
    }
    return results;
}

TransferTrialResult run_transfer_trial(const TransferTrialSpec& spec) {
    const ExperimentDataset src =
        make_experiment_dataset(spec.source_family, spec.kind, spec.source_regime,
                                spec.num_peaks, spec.s_src, derive_seed(spec.seed, 10));
    const ExperimentDataset tgt =
        make_experiment_dataset(spec.target_family, spec.kind, spec.target_regime,
                                spec.num_peaks, spec.s_tgt, derive_seed(spec.seed, 20));

    TrainingConfig pre = spec.pretrain;
    pre.seed = derive_seed(spec.seed, 30);
    const TrainingState pretrained = fit(src.data, spec.K, pre);

    TrainingConfig ad = spec.adaptation;
    ad.seed = derive_seed(spec.seed, 40);
    const std::uint64_t hash_before = baseline_hash(pretrained.bank.baseline);
    const AdaptResult adapted = adapt(pretrained.bank, tgt.data, ad);

    TrainingConfig scratch_cfg = spec.adaptation;
    scratch_cfg.seed = derive_seed(spec.seed, 50);
    const TrainingState scratch = fit(tgt.data, spec.K, scratch_cfg);

    TransferTrialResult r;
    r.label = spec.label;
    r.seed = spec.seed;
    r.mse_before = adapted.mse_before;
    r.mse_after = adapted.mse_after;
    r.mse_scratch = scratch.best_mse;
    r.imp = adapted.improvement;
    r.delta_t = (r.mse_scratch - r.mse_after) / r.mse_scratch;
    r.adapt_steps = adapted.state.step;
    r.scratch_steps = scratch.step;
    r.baseline_hash_before = hash_before;
    r.baseline_hash_after = baseline_hash(adapted.state.bank.baseline);
    r.features = similarity_features(
        {&src.graph, &src.data.decomp, &src.data.inputs},
        {&tgt.graph, &tgt.data.decomp, &tgt.data.inputs});
    return r;
}

namespace {

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;
};

PearsonResult pearson_xy(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) return {0.0, true};
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double denom = std::sqrt(sxx) * std::sqrt(syy);
    if (denom < 1e-12) return {0.0, true};
    return {sxy / denom, false};
}

} // namespace

TransferSummary summarize_transfer(const std::vector<TransferTrialResult>& trials) {
    if (trials.empty()) throw ContractError("summarize_transfer: no trials");
    TransferSummary s;

    std::vector<std::string> labels;
    for (const auto& t : trials)
        if (std::find(labels.begin(), labels.end(), t.label) == labels.end())
            labels.push_back(t.label);

    std::vector<double> class_mean_abs(labels.size(), 0.0);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        ClassStat st;
        st.label = labels[c];
        double sum = 0.0, sum_abs = 0.0, sum_dt = 0.0;
        std::vector<double> imps;
        for (const auto& t : trials)
            if (t.label == labels[c]) {
                imps.push_back(t.imp);
                sum += t.imp;
                sum_abs += std::abs(t.imp);
                sum_dt += t.delta_t;
            }
        st.count = static_cast<int>(imps.size());
        st.mean_imp = sum / st.count;
        st.mean_abs_imp = sum_abs / st.count;
        st.mean_delta_t = sum_dt / st.count;
        if (st.count > 1) {
            double var = 0.0;
            for (double v : imps) var += (v - st.mean_imp) * (v - st.mean_imp);
            st.stderr_imp = std::sqrt(var / (st.count - 1)) / std::sqrt(st.count);
        }
        class_mean_abs[c] = st.mean_abs_imp;
        s.classes.push_back(std::move(st));
    }

    // Class-normalized improvement: imp scaled by its class's mean magnitude.
    std::vector<double> norm_imp;
    norm_imp.reserve(trials.size());
    for (const auto& t : trials) {
        const std::size_t c = static_cast<std::size_t>(
            std::find(labels.begin(), labels.end(), t.label) - labels.begin());
        const double denom = class_mean_abs[c] > 1e-15 ? class_mean_abs[c] : 1.0;
        norm_imp.push_back(t.imp / denom);
    }

    for (int f = 0; f < SimilarityFeatures::kCount; ++f) {
        std::vector<double> xs;
        xs.reserve(trials.size());
        for (const auto& t : trials) xs.push_back(t.features.by_index(f));
        const PearsonResult p = pearson_xy(xs, norm_imp);
        s.correlations[f] = p.value;
        s.correlation_degenerate[f] = p.degenerate;
    }
    return s;
}

} // namespace specshape
