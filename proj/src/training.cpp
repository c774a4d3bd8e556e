#include "specshape/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"

namespace specshape {

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (alpha < 0.0 || beta < 0.0 || weight_decay < 0.0)
        throw ParameterError("alpha, beta, weight_decay must be >= 0");
    if (grid_points < 3)
        throw ParameterError("grid_points must be >= 3 (second differences)");
}

void SupervisedDataset::validate() const {
    const int n = lap.num_nodes();
    if (decomp.num_nodes() != n)
        throw ContractError("dataset: decomposition size != graph size");
    if (inputs.num_nodes() != n || targets.num_nodes() != n)
        throw ContractError("dataset: signal rows != graph size");
    if (inputs.num_signals() != targets.num_signals())
        throw ContractError("dataset: inputs/targets column count mismatch");
    if (inputs.num_signals() < 1) throw ContractError("dataset: no signals");
}

LossParts loss(const ShapedFilterBank& bank, const SupervisedDataset& data,
               std::span<const int> batch_indices, const TrainingConfig& cfg,
               ParameterGradient* grad) {
    if (batch_indices.empty()) throw ContractError("loss: empty batch");
    const Eigen::Index n = data.decomp.eigenvalues.size();
    for (int idx : batch_indices)
        if (idx < 0 || idx >= data.inputs.num_signals())
            throw ContractError("loss: batch index out of range");

    const std::vector<double> lambdas(data.decomp.eigenvalues.data(),
                                      data.decomp.eigenvalues.data() + n);
    const std::vector<double> resp = bank.response(lambdas);

    // Spectral path: project the batch once, filter by scaling rows.
    const Eigen::Index bsz = static_cast<Eigen::Index>(batch_indices.size());
    Eigen::MatrixXd xb(n, bsz), yb(n, bsz);
    for (Eigen::Index i = 0; i < bsz; ++i) {
        xb.col(i) = data.inputs.values.col(batch_indices[i]);
        yb.col(i) = data.targets.values.col(batch_indices[i]);
    }
    Eigen::MatrixXd cx = data.decomp.eigenvectors.transpose() * xb;
    Eigen::MatrixXd err = data.decomp.eigenvectors.transpose() * yb;
    for (Eigen::Index j = 0; j < n; ++j)
        err.row(j) = resp[j] * cx.row(j) - err.row(j);

    LossParts parts;
    parts.data = err.squaredNorm();

    // Smoothness: second differences of the baseline on a uniform grid.
    const int P = cfg.grid_points;
    std::vector<double> grid_x(P); // normalized MLP inputs
    for (int p = 0; p < P; ++p)
        grid_x[p] = static_cast<double>(p) / (P - 1);
    const std::vector<double> g = eval_baseline(bank.baseline, grid_x);
    double smooth_raw = 0.0;
    std::vector<double> d(P - 2);
    for (int p = 1; p + 1 < P; ++p) {
        d[p - 1] = g[p + 1] - 2.0 * g[p] + g[p - 1];
        smooth_raw += d[p - 1] * d[p - 1];
    }
    smooth_raw /= (P - 2);
    parts.smooth = cfg.alpha * smooth_raw;

    double shape_raw = 0.0;
    for (const auto& c : bank.components) shape_raw += c.amplitude * c.amplitude;
    parts.shape = cfg.beta * shape_raw;

    parts.total = parts.data + parts.smooth + parts.shape;

    if (grad) {
        // d(data)/d r_j = 2 <err_j., cx_j.>
        std::vector<double> upstream(n);
        for (Eigen::Index j = 0; j < n; ++j)
            upstream[j] = 2.0 * err.row(j).dot(cx.row(j));
        *grad = backward(bank, lambdas, upstream);

        // Smoothness gradient through the baseline values.
        std::vector<double> up_grid(P, 0.0);
        const double c2 = cfg.alpha * 2.0 / (P - 2);
        for (int p = 1; p + 1 < P; ++p) {
            const double s = c2 * d[p - 1];
            up_grid[p - 1] += s;
            up_grid[p] -= 2.0 * s;
            up_grid[p + 1] += s;
        }
        backward_baseline(bank.baseline, grid_x, up_grid, *grad);

        for (std::size_t k = 0; k < bank.components.size(); ++k)
            grad->components[k].amplitude += cfg.beta * 2.0 * bank.components[k].amplitude;

        if (!grad->all_finite()) throw NumericError("loss: non-finite gradient");
    }
    if (!std::isfinite(parts.total)) throw NumericError("loss: non-finite value");
    return parts;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

inline void adam_update(double& p, double& m, double& v, double g, double lr,
                        double bc1, double bc2) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g * g;
    p -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEps);
}

} // namespace

void adamw_step(TrainingState& state, const ParameterGradient& grad,
                const FreezeMask& mask, const TrainingConfig& cfg) {
    ShapedFilterBank& bank = state.bank;
    const std::size_t L = bank.baseline.weights.size();
    if (grad.weights.size() != L || grad.components.size() != bank.components.size())
        throw ContractError("adamw_step: gradient layout mismatch");
    if (!mask.components.empty() && mask.components.size() != bank.components.size())
        throw ContractError("adamw_step: freeze mask layout mismatch");

    ++state.step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate;

    if (!mask.baseline_frozen) {
        for (std::size_t l = 0; l < L; ++l) {
            auto& w = bank.baseline.weights[l];
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                adam_update(w(i), state.m.weights[l](i), state.v.weights[l](i),
                            grad.weights[l](i), lr, bc1, bc2);
                w(i) -= lr * cfg.weight_decay * w(i); // decoupled, weights only
            }
            auto& b = bank.baseline.biases[l];
            for (Eigen::Index i = 0; i < b.size(); ++i)
                adam_update(b[i], state.m.biases[l][i], state.v.biases[l][i],
                            grad.biases[l][i], lr, bc1, bc2);
        }
    }
    for (std::size_t k = 0; k < bank.components.size(); ++k) {
        const ComponentFreeze f =
            mask.components.empty() ? ComponentFreeze{} : mask.components[k];
        auto& c = bank.components[k];
        auto& m = state.m.components[k];
        auto& v = state.v.components[k];
        if (!f.mu)
            adam_update(c.mu_raw, m.mu_raw, v.mu_raw, grad.components[k].mu_raw, lr,
                        bc1, bc2);
        if (!f.gamma)
            adam_update(c.gamma_raw, m.gamma_raw, v.gamma_raw,
                        grad.components[k].gamma_raw, lr, bc1, bc2);
        if (!f.amplitude)
            adam_update(c.amplitude, m.amplitude, v.amplitude,
                        grad.components[k].amplitude, lr, bc1, bc2);
    }
}

double dataset_mse(const ShapedFilterBank& bank, const SupervisedDataset& data) {
    std::vector<int> all(data.num_signals());
    std::iota(all.begin(), all.end(), 0);
    TrainingConfig metric_cfg; // weights irrelevant: only the data part is used
    const LossParts p = loss(bank, data, all, metric_cfg, nullptr);
    return p.data / data.num_signals();
}

namespace {

/// Shared epoch loop: minibatch steps plus a full-dataset evaluation per
/// epoch that drives best-checkpoint tracking. Assumes state.bank is the
/// starting point and best_* fields are pre-seeded by the caller.
void run_epochs(TrainingState& state, ShapedFilterBank& best_bank,
                const SupervisedDataset& data, const FreezeMask& mask,
                const TrainingConfig& cfg) {
    const int S = data.num_signals();
    std::vector<int> order(S);
    std::iota(order.begin(), order.end(), 0);

    auto full_eval = [&](int epoch) {
        const LossParts p = loss(state.bank, data, order, cfg, nullptr);
        state.history.push_back({epoch, p.total, p.data, p.smooth, p.shape});
        const double mse = p.data / S;
        if (mse < state.best_mse) {
            state.best_mse = mse;
            state.best_epoch = epoch;
            best_bank = state.bank;
        }
    };

    std::iota(order.begin(), order.end(), 0);
    full_eval(0);

    Rng rng(derive_seed(cfg.seed, 0x50C4));
    ParameterGradient grad;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates shuffle for the minibatch order.
        for (int i = S - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_int(i + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < S; start += cfg.batch_size) {
            const int stop = std::min(start + cfg.batch_size, S);
            std::span<const int> batch(order.data() + start, stop - start);
            loss(state.bank, data, batch, cfg, &grad);
            adamw_step(state, grad, mask, cfg);
        }
        std::iota(order.begin(), order.end(), 0); // evaluation order is fixed
        full_eval(epoch);
    }
    state.bank = best_bank;
}

} // namespace

TrainingState fit(const SupervisedDataset& data, int K, const TrainingConfig& cfg) {
    cfg.validate();
    data.validate();
    TrainingState state;
    state.bank = init_bank(K, data.decomp.lambda_max(), cfg.seed);
    state.m = state.bank.zero_gradient();
    state.v = state.bank.zero_gradient();
    state.best_mse = std::numeric_limits<double>::infinity();
    ShapedFilterBank best = state.bank;
    run_epochs(state, best, data, FreezeMask::none(), cfg);
    return state;
}

ShapedFilterBank zero_shot_bank(const ShapedFilterBank& pretrained,
                                double target_lambda_max) {
    if (!(target_lambda_max > 0.0))
        throw ParameterError("zero_shot_bank: target lambda_max must be > 0");
    ShapedFilterBank out = pretrained;
    out.lambda_max = target_lambda_max;
    for (std::size_t k = 0; k < pretrained.components.size(); ++k) {
        const double mu_src = pretrained.components[k].mu(pretrained.lambda_max);
        // Clamp the center into the target band; the ratio is kept a hair off
        // the boundary so the logit stays finite (offset is far below any
        // tolerance in play).
        const double ratio = std::clamp(mu_src / target_lambda_max, 1e-12, 1.0 - 1e-12);
        out.components[k].mu_raw = logit(ratio);
    }
    return out;
}

AdaptResult adapt(const ShapedFilterBank& pretrained,
                  const SupervisedDataset& target, const TrainingConfig& cfg) {
    cfg.validate();
    target.validate();
    const double lmax_t = target.decomp.lambda_max();

    AdaptResult res;
    res.zero_shot = zero_shot_bank(pretrained, lmax_t);
    res.mse_before = dataset_mse(res.zero_shot, target);
    if (!(res.mse_before > 0.0))
        throw DegenerateInputError("adapt: zero-shot MSE is not positive");

    TrainingState state;
    if (cfg.carry_over_shaping) {
        state.bank = res.zero_shot;
    } else {
        state.bank = res.zero_shot;
        state.bank.components =
            init_bank(pretrained.num_components(), lmax_t, cfg.seed).components;
    }
    state.m = state.bank.zero_gradient();
    state.v = state.bank.zero_gradient();
    // The zero-shot filter is the checkpoint to beat.
    state.best_mse = res.mse_before;
    state.best_epoch = 0;
    ShapedFilterBank best = res.zero_shot;

    run_epochs(state, best, target, FreezeMask::baseline_only(), cfg);

    res.mse_after = state.best_mse;
    res.improvement = (res.mse_before - res.mse_after) / res.mse_before;
    res.state = std::move(state);
    return res;
}

std::uint64_t baseline_hash(const BaselineKernel& k) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const double* p, std::size_t count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < count * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& w : k.weights) mix(w.data(), static_cast<std::size_t>(w.size()));
    for (const auto& b : k.biases) mix(b.data(), static_cast<std::size_t>(b.size()));
    return h;
}

namespace {

nlohmann::json gradient_to_json(const ParameterGradient& g) {
    nlohmann::json j;
    auto ws = nlohmann::json::array();
    for (const auto& w : g.weights) {
        std::vector<double> flat;
        flat.reserve(w.size());
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
        ws.push_back(flat);
    }
    auto bs = nlohmann::json::array();
    for (const auto& b : g.biases)
        bs.push_back(std::vector<double>(b.data(), b.data() + b.size()));
    auto cs = nlohmann::json::array();
    for (const auto& c : g.components)
        cs.push_back({{"mu_raw", c.mu_raw},
                      {"gamma_raw", c.gamma_raw},
                      {"amplitude", c.amplitude}});
    j["weights"] = std::move(ws);
    j["biases"] = std::move(bs);
    j["components"] = std::move(cs);
    return j;
}

ParameterGradient gradient_from_json(const nlohmann::json& j,
                                     const ShapedFilterBank& ref) {
    ParameterGradient g = ref.zero_gradient();
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != g.weights.size() || bs.size() != g.biases.size())
        throw FormatError("checkpoint json: moment layout mismatch");
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        const auto flat = ws.at(l).get<std::vector<double>>();
        auto& w = g.weights[l];
        if (static_cast<Eigen::Index>(flat.size()) != w.size())
            throw FormatError("checkpoint json: moment weight size mismatch");
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[r * w.cols() + c];
        const auto bvec = bs.at(l).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(bvec.size()) != g.biases[l].size())
            throw FormatError("checkpoint json: moment bias size mismatch");
        g.biases[l] = Eigen::Map<const Eigen::VectorXd>(bvec.data(), bvec.size());
    }
    const auto& cs = j.at("components");
    if (cs.size() != g.components.size())
        throw FormatError("checkpoint json: moment component count mismatch");
    for (std::size_t k = 0; k < g.components.size(); ++k) {
        g.components[k].mu_raw = cs.at(k).at("mu_raw").get<double>();
        g.components[k].gamma_raw = cs.at(k).at("gamma_raw").get<double>();
        g.components[k].amplitude = cs.at(k).at("amplitude").get<double>();
    }
    return g;
}

} // namespace

std::string checkpoint_to_json(const TrainingState& s) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["bank"] = nlohmann::json::parse(bank_to_json(s.bank));
    j["adam_m"] = gradient_to_json(s.m);
    j["adam_v"] = gradient_to_json(s.v);
    j["step"] = s.step;
    j["best_mse"] = s.best_mse;
    j["best_epoch"] = s.best_epoch;
    return j.dump(2) + "\n";
}

TrainingState checkpoint_from_json(const std::string& text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("format_version").get<int>() != 1)
            throw FormatError("checkpoint json: unsupported format_version");
        TrainingState s;
        s.bank = bank_from_json(j.at("bank").dump());
        s.m = gradient_from_json(j.at("adam_m"), s.bank);
        s.v = gradient_from_json(j.at("adam_v"), s.bank);
        s.step = j.at("step").get<long long>();
        s.best_mse = j.at("best_mse").get<double>();
        s.best_epoch = j.at("best_epoch").get<int>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint json: ") + e.what());
    }
}

std::string history_csv(const TrainingState& s) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,total,data,smooth,shape\n";
    for (const auto& r : s.history)
        os << r.epoch << "," << r.total << "," << r.data << "," << r.smooth << ","
           << r.shape << "\n";
    return os.str();
}

} // namespace specshape
