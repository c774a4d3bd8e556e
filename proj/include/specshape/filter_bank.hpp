#ifndef SPECSHAPE_FILTER_BANK_HPP
#define SPECSHAPE_FILTER_BANK_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace specshape {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus: log(e^y - 1), computed stably.
inline double softplus_inverse(double y) {
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

enum class Activation { Tanh, Softplus };

/// Scalar-in, scalar-out MLP. The bank feeds it the spectral coordinate
/// normalized to [0, 1] (lambda / lambda_max), so the learned shape is
/// expressed on a graph-independent axis and can be shared across spectra.
struct BaselineKernel {
    std::vector<int> layer_sizes; // first and last are 1
    std::vector<Eigen::MatrixXd> weights; // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::Tanh;

    int num_layers() const { return static_cast<int>(weights.size()); }
    void validate() const;
};

/// One Gaussian shaping factor. Raw fields are unconstrained; the effective
/// center is lambda_max * sigmoid(mu_raw) in [0, lambda_max] and the effective
/// bandwidth softplus(gamma_raw) >= 0.
struct ShapingComponent {
    double mu_raw = 0.0;
    double gamma_raw = 0.0;
    double amplitude = 1.0;

    double mu(double lambda_max) const { return lambda_max * sigmoid(mu_raw); }
    double gamma() const { return softplus(gamma_raw); }
};

/// Gradient container mirroring the parameter layout of a ShapedFilterBank.
struct ParameterGradient {
    struct ComponentGradient {
        double mu_raw = 0.0;
        double gamma_raw = 0.0;
        double amplitude = 0.0;
    };
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    std::vector<ComponentGradient> components;

    void scale(double factor);
    void add(const ParameterGradient& other);
    bool all_finite() const;
};

/// The learnable multi-peak spectral filter:
///   G(lambda) = sum_k a_k * g(lambda) * exp(-gamma_k (lambda - mu_k)^2)
/// with the shared baseline g realized by `baseline`.
struct ShapedFilterBank {
    BaselineKernel baseline;
    std::vector<ShapingComponent> components;
    double lambda_max = 1.0;

    int num_components() const { return static_cast<int>(components.size()); }

    /// Total response G at each lambda.
    std::vector<double> response(std::span<const double> lambdas) const;

    /// Per-component responses; column k of the result pairs with component k.
    std::vector<std::vector<double>> component_responses(
        std::span<const double> lambdas) const;

    ParameterGradient zero_gradient() const;
};

/// Raw MLP forward pass (no input normalization applied here).
std::vector<double> eval_baseline(const BaselineKernel& k,
                                  std::span<const double> xs);

/// a * g(lambda) * exp(-gamma (lambda - mu)^2) pointwise, with baseline values
/// supplied by the caller and mu/gamma derived from the raw fields.
std::vector<double> eval_component(const ShapingComponent& c,
                                   std::span<const double> baseline_vals,
                                   std::span<const double> lambdas,
                                   double lambda_max);

/// Total bank response. If out_of_range is given, it is set when any lambda
/// falls outside [0, lambda_max] (the value is still computed).
std::vector<double> eval_bank(const ShapedFilterBank& b,
                              std::span<const double> lambdas,
                              bool* out_of_range = nullptr);

/// Exact reverse-mode gradient of sum_j upstream[j] * G(lambda[j]) with
/// respect to every bank parameter, including the chain through the
/// sigmoid/softplus reparameterizations.
ParameterGradient backward(const ShapedFilterBank& b,
                           std::span<const double> lambdas,
                           std::span<const double> upstream);

/// Gradient of sum_j upstream[j] * g(x[j]) with respect to the MLP parameters
/// only (xs are already-normalized inputs). Accumulates into grad.
void backward_baseline(const BaselineKernel& k, std::span<const double> xs,
                       std::span<const double> upstream, ParameterGradient& grad);

/// Fresh bank: centers equally spaced at (k - 1/2) * lambda_max / K, Gaussian
/// std lambda_max / (2K), amplitudes 1/K, fan-in-scaled uniform MLP weights,
/// zero biases except a unit output bias so the baseline starts near 1.
ShapedFilterBank init_bank(int K, double lambda_max, std::uint64_t seed,
                           const std::vector<int>& layer_sizes = {1, 32, 32, 1});

std::string bank_to_json(const ShapedFilterBank& b);
ShapedFilterBank bank_from_json(const std::string& text);

} // namespace specshape

#endif
