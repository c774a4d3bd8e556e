#include "specshape/filter_bank.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"

namespace specshape {

void BaselineKernel::validate() const {
    if (layer_sizes.size() < 3)
        throw ContractError("baseline kernel needs at least one hidden layer");
    if (layer_sizes.front() != 1 || layer_sizes.back() != 1)
        throw ContractError("baseline kernel must map 1 input to 1 output");
    if (weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size())
        throw ContractError("baseline kernel: weight/bias count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l])
            throw ContractError("baseline kernel: weight shape mismatch at layer " +
                                std::to_string(l));
        if (biases[l].size() != layer_sizes[l + 1])
            throw ContractError("baseline kernel: bias shape mismatch at layer " +
                                std::to_string(l));
    }
}

namespace {

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
    if (a == Activation::Tanh) return z.array().tanh();
    Eigen::MatrixXd out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = softplus(z(i));
    return out;
}

Eigen::MatrixXd activate_grad(Activation a, const Eigen::MatrixXd& z) {
    if (a == Activation::Tanh) {
        Eigen::MatrixXd t = z.array().tanh();
        return 1.0 - t.array().square();
    }
    Eigen::MatrixXd out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = sigmoid(z(i));
    return out;
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre; // Z_l, one per layer
    std::vector<Eigen::MatrixXd> act; // A_0 = inputs, then post-activations
};

/// Whole-batch MLP forward: columns of the cache matrices index input points.
Eigen::RowVectorXd mlp_forward(const BaselineKernel& k,
                               std::span<const double> xs,
                               ForwardCache* cache = nullptr) {
    const int L = k.num_layers();
    Eigen::MatrixXd a(1, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) a(0, j) = xs[j];
    if (cache) cache->act.push_back(a);
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (k.weights[l] * a).colwise() + k.biases[l];
        if (cache) cache->pre.push_back(z);
        a = (l + 1 < L) ? activate(k.activation, z) : std::move(z);
        if (cache) cache->act.push_back(a);
    }
    return a.row(0);
}

} // namespace

std::vector<double> eval_baseline(const BaselineKernel& k,
                                  std::span<const double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) throw NumericError("eval_baseline: non-finite input");
    const Eigen::RowVectorXd out = mlp_forward(k, xs);
    if (!out.allFinite())
        throw NumericError("eval_baseline: non-finite output (bad parameters?)");
    return std::vector<double>(out.data(), out.data() + out.size());
}

std::vector<double> eval_component(const ShapingComponent& c,
                                   std::span<const double> baseline_vals,
                                   std::span<const double> lambdas,
                                   double lambda_max) {
    if (baseline_vals.size() != lambdas.size())
        throw ContractError("eval_component: baseline_vals/lambdas length mismatch");
    const double mu = c.mu(lambda_max);
    const double gamma = c.gamma();
    std::vector<double> out(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
        const double d = lambdas[j] - mu;
        out[j] = c.amplitude * baseline_vals[j] * std::exp(-gamma * d * d);
    }
    return out;
}

std::vector<double> eval_bank(const ShapedFilterBank& b,
                              std::span<const double> lambdas,
                              bool* out_of_range) {
    if (b.components.empty()) throw ParameterError("bank has no components");
    if (out_of_range) {
        *out_of_range = std::any_of(lambdas.begin(), lambdas.end(), [&](double l) {
            return l < 0.0 || l > b.lambda_max;
        });
    }
    std::vector<double> xs(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) xs[j] = lambdas[j] / b.lambda_max;
    const std::vector<double> g = eval_baseline(b.baseline, xs);

    std::vector<double> total(lambdas.size(), 0.0);
    for (const auto& c : b.components) {
        const double mu = c.mu(b.lambda_max);
        const double gamma = c.gamma();
        for (std::size_t j = 0; j < lambdas.size(); ++j) {
            const double d = lambdas[j] - mu;
            total[j] += c.amplitude * g[j] * std::exp(-gamma * d * d);
        }
    }
    return total;
}

std::vector<double> ShapedFilterBank::response(std::span<const double> lambdas) const {
    return eval_bank(*this, lambdas);
}

std::vector<std::vector<double>> ShapedFilterBank::component_responses(
    std::span<const double> lambdas) const {
    std::vector<double> xs(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) xs[j] = lambdas[j] / lambda_max;
    const std::vector<double> g = eval_baseline(baseline, xs);
    std::vector<std::vector<double>> out;
    out.reserve(components.size());
    for (const auto& c : components)
        out.push_back(eval_component(c, g, lambdas, lambda_max));
    return out;
}

ParameterGradient ShapedFilterBank::zero_gradient() const {
    ParameterGradient grad;
    for (const auto& w : baseline.weights)
        grad.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : baseline.biases)
        grad.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    grad.components.resize(components.size());
    return grad;
}

void ParameterGradient::scale(double factor) {
    for (auto& w : weights) w *= factor;
    for (auto& b : biases) b *= factor;
    for (auto& c : components) {
        c.mu_raw *= factor;
        c.gamma_raw *= factor;
        c.amplitude *= factor;
    }
}

void ParameterGradient::add(const ParameterGradient& other) {
    if (weights.size() != other.weights.size() ||
        components.size() != other.components.size())
        throw ContractError("ParameterGradient::add: layout mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
    for (std::size_t k = 0; k < components.size(); ++k) {
        components[k].mu_raw += other.components[k].mu_raw;
        components[k].gamma_raw += other.components[k].gamma_raw;
        components[k].amplitude += other.components[k].amplitude;
    }
}

bool ParameterGradient::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    for (const auto& c : components)
        if (!std::isfinite(c.mu_raw) || !std::isfinite(c.gamma_raw) ||
            !std::isfinite(c.amplitude))
            return false;
    return true;
}

void backward_baseline(const BaselineKernel& k, std::span<const double> xs,
                       std::span<const double> upstream, ParameterGradient& grad) {
    if (xs.size() != upstream.size())
        throw ContractError("backward_baseline: xs/upstream length mismatch");
    const int L = k.num_layers();
    ForwardCache cache;
    mlp_forward(k, xs, &cache);
    Eigen::MatrixXd delta(1, static_cast<Eigen::Index>(upstream.size()));
    for (std::size_t j = 0; j < upstream.size(); ++j) delta(0, j) = upstream[j];
    for (int l = L - 1; l >= 0; --l) {
        grad.weights[l].noalias() += delta * cache.act[l].transpose();
        grad.biases[l] += delta.rowwise().sum();
        if (l > 0)
            delta = (k.weights[l].transpose() * delta)
                        .cwiseProduct(activate_grad(k.activation, cache.pre[l - 1]));
    }
}

ParameterGradient backward(const ShapedFilterBank& b,
                           std::span<const double> lambdas,
                           std::span<const double> upstream) {
    if (lambdas.size() != upstream.size())
        throw ContractError("backward: lambdas/upstream length mismatch");
    ParameterGradient grad = b.zero_gradient();

    std::vector<double> xs(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) xs[j] = lambdas[j] / b.lambda_max;
    const std::vector<double> g = eval_baseline(b.baseline, xs);

    // upstream for the baseline: dF/dg(lambda_j) = u_j * sum_k a_k E_k(lambda_j)
    std::vector<double> baseline_upstream(lambdas.size(), 0.0);

    for (std::size_t k = 0; k < b.components.size(); ++k) {
        const auto& c = b.components[k];
        const double sig = sigmoid(c.mu_raw);
        const double mu = b.lambda_max * sig;
        const double gamma = c.gamma();
        const double dmu_draw = b.lambda_max * sig * (1.0 - sig);
        const double dgamma_draw = sigmoid(c.gamma_raw);

        double g_a = 0.0, g_mu = 0.0, g_gamma = 0.0;
        for (std::size_t j = 0; j < lambdas.size(); ++j) {
            const double d = lambdas[j] - mu;
            const double env = std::exp(-gamma * d * d);
            const double u = upstream[j];
            g_a += u * g[j] * env;
            g_mu += u * c.amplitude * g[j] * env * (2.0 * gamma * d);
            g_gamma += u * c.amplitude * g[j] * env * (-d * d);
            baseline_upstream[j] += u * c.amplitude * env;
        }
        grad.components[k].amplitude = g_a;
        grad.components[k].mu_raw = g_mu * dmu_draw;
        grad.components[k].gamma_raw = g_gamma * dgamma_draw;
    }

    backward_baseline(b.baseline, xs, baseline_upstream, grad);
    // d(lambda/lambda_max)/d(input) chain stops here: lambda_max is a fixed
    // structural field, not a learnable parameter.
    if (!grad.all_finite()) throw NumericError("backward: non-finite gradient");
    return grad;
}

ShapedFilterBank init_bank(int K, double lambda_max, std::uint64_t seed,
                           const std::vector<int>& layer_sizes) {
    if (K < 1) throw ParameterError("init_bank: K must be >= 1");
    if (!(lambda_max > 0.0)) throw ParameterError("init_bank: lambda_max must be > 0");

    ShapedFilterBank bank;
    bank.lambda_max = lambda_max;
    bank.baseline.layer_sizes = layer_sizes;
    bank.baseline.activation = Activation::Tanh;

    Rng rng(derive_seed(seed, 0xB4A5));
    const int L = static_cast<int>(layer_sizes.size()) - 1;
    for (int l = 0; l < L; ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-s, s);
        bank.baseline.weights.push_back(std::move(w));
        bank.baseline.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    bank.baseline.biases.back()[0] = 1.0; // baseline starts near 1
    bank.baseline.validate();

    // Equally spaced centers, bandwidths sized to tile the spectrum, and
    // amplitudes that sum to one.
    const double std_dev = lambda_max / (2.0 * K);
    const double gamma0 = 1.0 / (2.0 * std_dev * std_dev);
    for (int k = 1; k <= K; ++k) {
        ShapingComponent c;
        const double mu = (k - 0.5) * lambda_max / K;
        c.mu_raw = logit(mu / lambda_max);
        c.gamma_raw = softplus_inverse(gamma0);
        c.amplitude = 1.0 / K;
        bank.components.push_back(c);
    }
    return bank;
}

std::string bank_to_json(const ShapedFilterBank& b) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["lambda_max"] = b.lambda_max;
    j["input_normalization"] = "lambda_over_lambda_max";
    nlohmann::json base;
    base["layer_sizes"] = b.baseline.layer_sizes;
    base["activation"] = b.baseline.activation == Activation::Tanh ? "tanh" : "softplus";
    auto weights = nlohmann::json::array();
    auto biases = nlohmann::json::array();
    for (const auto& w : b.baseline.weights) {
        std::vector<double> flat; // row-major
        flat.reserve(w.size());
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
        weights.push_back(flat);
    }
    for (const auto& v : b.baseline.biases)
        biases.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    base["weights"] = std::move(weights);
    base["biases"] = std::move(biases);
    j["baseline"] = std::move(base);
    auto comps = nlohmann::json::array();
    for (const auto& c : b.components)
        comps.push_back({{"mu_raw", c.mu_raw},
                         {"gamma_raw", c.gamma_raw},
                         {"amplitude", c.amplitude}});
    j["components"] = std::move(comps);
    return j.dump(2) + "\n";
}

ShapedFilterBank bank_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bank json: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != 1)
            throw FormatError("bank json: unsupported format_version");
        ShapedFilterBank b;
        b.lambda_max = j.at("lambda_max").get<double>();
        const auto& base = j.at("baseline");
        b.baseline.layer_sizes = base.at("layer_sizes").get<std::vector<int>>();
        const std::string act = base.at("activation").get<std::string>();
        if (act == "tanh")
            b.baseline.activation = Activation::Tanh;
        else if (act == "softplus")
            b.baseline.activation = Activation::Softplus;
        else
            throw FormatError("bank json: unknown activation '" + act + "'");
        const auto& ws = base.at("weights");
        const auto& bs = base.at("biases");
        for (std::size_t l = 0; l + 1 < b.baseline.layer_sizes.size(); ++l) {
            const int rows = b.baseline.layer_sizes[l + 1];
            const int cols = b.baseline.layer_sizes[l];
            const auto flat = ws.at(l).get<std::vector<double>>();
            if (static_cast<int>(flat.size()) != rows * cols)
                throw FormatError("bank json: weight size mismatch");
            Eigen::MatrixXd w(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) w(r, c) = flat[r * cols + c];
            b.baseline.weights.push_back(std::move(w));
            const auto bvec = bs.at(l).get<std::vector<double>>();
            if (static_cast<int>(bvec.size()) != rows)
                throw FormatError("bank json: bias size mismatch");
            b.baseline.biases.push_back(
                Eigen::Map<const Eigen::VectorXd>(bvec.data(), bvec.size()));
        }
        for (const auto& cj : j.at("components")) {
            ShapingComponent c;
            c.mu_raw = cj.at("mu_raw").get<double>();
            c.gamma_raw = cj.at("gamma_raw").get<double>();
            c.amplitude = cj.at("amplitude").get<double>();
            b.components.push_back(c);
        }
        b.baseline.validate();
        if (b.components.empty()) throw FormatError("bank json: no components");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bank json: ") + e.what());
    }
}

} // namespace specshape
