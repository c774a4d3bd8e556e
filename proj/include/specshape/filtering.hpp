#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "specshape/filter_bank.hpp"
#include "specshape/laplacian.hpp"

namespace specshape {

/// A batch of node signals, one per column.
struct SignalBatch {
    Eigen::MatrixXd values; // N x S

    SignalBatch() = default;
    explicit SignalBatch(Eigen::MatrixXd v) : values(std::move(v)) {}
    int num_nodes() const { return static_cast<int>(values.rows()); }
    int num_signals() const { return static_cast<int>(values.cols()); }
};

enum class Damping { None, Jackson };

/// Truncated Chebyshev expansion of a spectral response on [0, lambda_max].
/// With damping == Jackson the stored coefficients already include the
/// damping weights.
struct ChebyshevFilter {
    std::vector<double> coefficients; // c_0..c_R
    double lambda_max = 0.0;
    Damping damping = Damping::None;

    int degree() const { return static_cast<int>(coefficients.size()) - 1; }
};

/// Instrumentation for filter applications.
struct ApplyStats {
    long long matvec_count = 0;
    bool lambda_max_exceeded = false; // filter built for a smaller spectrum
};

struct FilterMode {
    enum class Kind { Exact, Chebyshev };
    Kind kind = Kind::Exact;
    int degree = 64;
    Damping damping = Damping::None;

    static FilterMode exact() { return {Kind::Exact, 0, Damping::None}; }
    static FilterMode chebyshev(int R, Damping d = Damping::None) {
        return {Kind::Chebyshev, R, d};
    }
};

/// y = U diag(response) U^T x, column by column.
SignalBatch apply_exact(const SpectralDecomposition& decomp,
                        std::span<const double> response, const SignalBatch& x);

/// Jackson damping weight for coefficient r of a degree-R expansion.
double jackson_weight(int r, int R);

/// Project a scalar response function onto Chebyshev polynomials of the
/// scaled spectral variable via Gauss-Chebyshev quadrature.
/// num_quadrature = 0 selects the default 4(R+1) nodes.
ChebyshevFilter project_chebyshev(const std::function<double(double)>& response_fn,
                                  double lambda_max, int R,
                                  int num_quadrature = 0,
                                  Damping damping = Damping::None);

/// Same projection for a filter bank's total response, evaluating the bank
/// once on all quadrature nodes. domain_lambda_max widens the projection
/// interval beyond the bank's own spectrum (needed when the target operator's
/// spectrum is larger); zero means the bank's lambda_max.
ChebyshevFilter project_bank_chebyshev(const ShapedFilterBank& bank, int R,
                                       int num_quadrature = 0,
                                       Damping damping = Damping::None,
                                       double domain_lambda_max = 0.0);

/// Evaluate the (possibly damped) expansion itself at one spectral point.
double chebyshev_response(const ChebyshevFilter& f, double lambda);

/// Three-term recurrence application: exactly degree() sparse matvecs per
/// column, three work vectors. If `decomp` is supplied, a filter built for a
/// smaller spectrum is flagged in stats (not fatal).
SignalBatch apply_chebyshev(const ChebyshevFilter& f, const LaplacianOperator& lap,
                            const SignalBatch& x, ApplyStats* stats = nullptr,
                            const SpectralDecomposition* decomp = nullptr);

/// Filter a batch through a bank. The bank's total response is projected once
/// (cost independent of K). Exact mode needs an eigendecomposition; pass a
/// cached one to avoid recomputation.
SignalBatch filter_bank_apply(const ShapedFilterBank& bank,
                              const LaplacianOperator& lap, const SignalBatch& x,
                              const FilterMode& mode, ApplyStats* stats = nullptr,
                              const SpectralDecomposition* cached_decomp = nullptr);

std::string chebyshev_to_json(const ChebyshevFilter& f);
ChebyshevFilter chebyshev_from_json(const std::string& text);

/// Plot-ready dump of a bank's response: columns lambda, response_total,
/// response_component_1..K over a uniform grid on [0, lambda_max].
std::string response_curve_csv(const ShapedFilterBank& bank, int num_points = 512);

} // namespace specshape
