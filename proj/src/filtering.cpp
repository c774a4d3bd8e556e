#include "specshape/filtering.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "specshape/errors.hpp"

namespace specshape {

SignalBatch apply_exact(const SpectralDecomposition& decomp,
                        std::span<const double> response, const SignalBatch& x) {
    const Eigen::Index n = decomp.eigenvalues.size();
    if (static_cast<Eigen::Index>(response.size()) != n)
        throw ContractError("apply_exact: response length != N");
    if (x.values.rows() != n)
        throw ContractError("apply_exact: signal rows != N");
    Eigen::MatrixXd coeffs = decomp.eigenvectors.transpose() * x.values;
    for (Eigen::Index j = 0; j < n; ++j) coeffs.row(j) *= response[j];
    return SignalBatch(decomp.eigenvectors * coeffs);
}

double jackson_weight(int r, int R) {
    if (r < 0 || r > R) throw ContractError("jackson_weight: r out of [0, R]");
    const double q = std::numbers::pi / (R + 1);
    return ((R - r + 1) * std::cos(q * r) + std::sin(q * r) * (std::cos(q) / std::sin(q))) /
           (R + 1);
}

namespace {

ChebyshevFilter assemble_filter(std::span<const double> fvals, double lambda_max,
                                int R, int M, Damping damping) {
    ChebyshevFilter filt;
    filt.lambda_max = lambda_max;
    filt.damping = damping;
    filt.coefficients.assign(R + 1, 0.0);
    for (int r = 0; r <= R; ++r) {
        double acc = 0.0;
        for (int q = 0; q < M; ++q) {
            const double theta = std::numbers::pi * (q + 0.5) / M;
            acc += fvals[q] * std::cos(r * theta);
        }
        filt.coefficients[r] = (r == 0 ? 1.0 : 2.0) / M * acc;
        if (damping == Damping::Jackson) filt.coefficients[r] *= jackson_weight(r, R);
    }
    return filt;
}

std::vector<double> quadrature_lambdas(double lambda_max, int M) {
    std::vector<double> out(M);
    for (int q = 0; q < M; ++q) {
        const double theta = std::numbers::pi * (q + 0.5) / M;
        out[q] = (std::cos(theta) + 1.0) * lambda_max / 2.0;
    }
    return out;
}

} // namespace

ChebyshevFilter project_chebyshev(const std::function<double(double)>& response_fn,
                                  double lambda_max, int R, int num_quadrature,
                                  Damping damping) {
    if (R < 1) throw ParameterError("project_chebyshev: R must be >= 1");
    if (!(lambda_max > 0.0))
        throw ParameterError("project_chebyshev: lambda_max must be > 0");
    const int M = num_quadrature > 0 ? num_quadrature : 4 * (R + 1);
    if (M < R + 1)
        throw ParameterError("project_chebyshev: need at least R+1 quadrature nodes");
    const std::vector<double> lambdas = quadrature_lambdas(lambda_max, M);
    std::vector<double> fvals(M);
    for (int q = 0; q < M; ++q) fvals[q] = response_fn(lambdas[q]);
    return assemble_filter(fvals, lambda_max, R, M, damping);
}

ChebyshevFilter project_bank_chebyshev(const ShapedFilterBank& bank, int R,
                                       int num_quadrature, Damping damping,
                                       double domain_lambda_max) {
    if (R < 1) throw ParameterError("project_bank_chebyshev: R must be >= 1");
    const int M = num_quadrature > 0 ? num_quadrature : 4 * (R + 1);
    if (M < R + 1)
        throw ParameterError("project_bank_chebyshev: need at least R+1 quadrature nodes");
    const double domain =
        domain_lambda_max > 0.0 ? domain_lambda_max : bank.lambda_max;
    const std::vector<double> lambdas = quadrature_lambdas(domain, M);
    const std::vector<double> fvals = bank.response(lambdas);
    return assemble_filter(fvals, domain, R, M, damping);
}

double chebyshev_response(const ChebyshevFilter& f, double lambda) {
    const double t = 2.0 * lambda / f.lambda_max - 1.0;
    double acc = f.coefficients[0];
    double t_prev = 1.0, t_cur = t;
    for (std::size_t r = 1; r < f.coefficients.size(); ++r) {
        acc += f.coefficients[r] * t_cur;
        const double t_next = 2.0 * t * t_cur - t_prev;
        t_prev = t_cur;
        t_cur = t_next;
    }
    return acc;
}

SignalBatch apply_chebyshev(const ChebyshevFilter& f, const LaplacianOperator& lap,
                            const SignalBatch& x, ApplyStats* stats,
                            const SpectralDecomposition* decomp) {
    const int R = f.degree();
    if (R < 0 || f.coefficients.empty())
        throw ContractError("apply_chebyshev: filter needs at least c_0");
    if (x.values.rows() != lap.num_nodes())
        throw ContractError("apply_chebyshev: signal rows != N");
    if (stats && decomp && decomp->lambda_max() > f.lambda_max * (1.0 + 1e-12))
        stats->lambda_max_exceeded = true;

    const double inv_half = 2.0 / f.lambda_max;
    const Eigen::Index n = x.values.rows();
    SignalBatch out;
    out.values.resize(n, x.values.cols());
    if (R == 0) { // T_0 alone: no matvecs, exact scaling
        out.values = f.coefficients[0] * x.values;
        return out;
    }

    Eigen::VectorXd t_prev(n), t_cur(n), t_next(n);
    for (Eigen::Index col = 0; col < x.values.cols(); ++col) {
        const auto xc = x.values.col(col);
        t_prev = xc;
        lap.apply(t_prev, t_cur); // T_1 = (2/lmax) L x - x
        if (stats) ++stats->matvec_count;
        t_cur = inv_half * t_cur - t_prev;
        auto yc = out.values.col(col);
        yc = f.coefficients[0] * t_prev + f.coefficients[1] * t_cur;
        for (int r = 2; r <= R; ++r) {
            lap.apply(t_cur, t_next);
            if (stats) ++stats->matvec_count;
            t_next = 2.0 * (inv_half * t_next - t_cur) - t_prev;
            yc += f.coefficients[r] * t_next;
            t_prev.swap(t_cur);
            t_cur.swap(t_next);
        }
    }
    return out;
}

SignalBatch filter_bank_apply(const ShapedFilterBank& bank,
                              const LaplacianOperator& lap, const SignalBatch& x,
                              const FilterMode& mode, ApplyStats* stats,
                              const SpectralDecomposition* cached_decomp) {
    if (mode.kind == FilterMode::Kind::Exact) {
        SpectralDecomposition local;
        const SpectralDecomposition* d = cached_decomp;
        if (!d) {
            local = decompose(lap);
            d = &local;
        }
        const std::vector<double> lambdas(d->eigenvalues.data(),
                                          d->eigenvalues.data() + d->eigenvalues.size());
        const std::vector<double> resp = bank.response(lambdas);
        return apply_exact(*d, resp, x);
    }
    const ChebyshevFilter f = project_bank_chebyshev(bank, mode.degree, 0, mode.damping);
    return apply_chebyshev(f, lap, x, stats, cached_decomp);
}

std::string chebyshev_to_json(const ChebyshevFilter& f) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["lambda_max"] = f.lambda_max;
    j["damping"] = f.damping == Damping::Jackson ? "jackson" : "none";
    j["coefficients"] = f.coefficients;
    return j.dump(2) + "\n";
}

ChebyshevFilter chebyshev_from_json(const std::string& text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("format_version").get<int>() != 1)
            throw FormatError("chebyshev json: unsupported format_version");
        ChebyshevFilter f;
        f.lambda_max = j.at("lambda_max").get<double>();
        const std::string d = j.at("damping").get<std::string>();
        if (d == "jackson")
            f.damping = Damping::Jackson;
        else if (d == "none")
            f.damping = Damping::None;
        else
            throw FormatError("chebyshev json: unknown damping '" + d + "'");
        f.coefficients = j.at("coefficients").get<std::vector<double>>();
        if (f.coefficients.size() < 2)
            throw FormatError("chebyshev json: need degree >= 1");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("chebyshev json: ") + e.what());
    }
}

std::string response_curve_csv(const ShapedFilterBank& bank, int num_points) {
    if (num_points < 2) throw ParameterError("response_curve_csv: need >= 2 points");
    std::vector<double> grid(num_points);
    for (int i = 0; i < num_points; ++i)
        grid[i] = bank.lambda_max * i / (num_points - 1);
    const std::vector<double> total = bank.response(grid);
    const auto comps = bank.component_responses(grid);

    std::ostringstream os;
    os.precision(17);
    os << "lambda,response_total";
    for (std::size_t k = 1; k <= comps.size(); ++k) os << ",response_component_" << k;
    os << "\n";
    for (int i = 0; i < num_points; ++i) {
        os << grid[i] << "," << total[i];
        for (const auto& c : comps) os << "," << c[i];
        os << "\n";
    }
    return os.str();
}

} // namespace specshape
