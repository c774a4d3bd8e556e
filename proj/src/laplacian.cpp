#include "specshape/laplacian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"

namespace specshape {

LaplacianOperator::LaplacianOperator(Graph graph, LaplacianKind kind,
                                     const Eigen::SparseMatrix<double>& matrix,
                                     double lambda_max)
    : graph_(std::move(graph)), kind_(kind), matrix_(matrix), lambda_max_(lambda_max) {}

namespace {

Eigen::SparseMatrix<double> laplacian_matrix(const Graph& g, LaplacianKind kind) {
    const int n = g.num_nodes();
    const auto deg = g.degrees();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * g.num_edges() + n);
    if (kind == LaplacianKind::Combinatorial) {
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, deg[i]);
        for (const auto& e : g.edges()) {
            trips.emplace_back(e.u, e.v, -e.w);
            trips.emplace_back(e.v, e.u, -e.w);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            if (!(deg[i] > 0.0))
                throw DegenerateInputError(
                    "normalized laplacian: node " + std::to_string(i) + " is isolated");
        }
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
        for (const auto& e : g.edges()) {
            const double v = -e.w / std::sqrt(deg[e.u] * deg[e.v]);
            trips.emplace_back(e.u, e.v, v);
            trips.emplace_back(e.v, e.u, v);
        }
    }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

} // namespace

// Cyclic Jacobi: sweep all off-diagonal (p, q) pairs, rotating each to zero,
// until the off-diagonal Frobenius mass is negligible. Accurate to machine
// precision for the sizes this artifact decomposes (n <= 512).
void jacobi_eigensymmetric(const Eigen::MatrixXd& A, Eigen::VectorXd& eigenvalues,
                           Eigen::MatrixXd& eigenvectors) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd M = A;
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);

    const double scale = std::max(A.norm(), 1e-300);
    const double tol = 1e-15 * scale;
    const int max_sweeps = 64;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += 2.0 * M(p, q) * M(p, q);
        if (std::sqrt(off) <= tol) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = M(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double app = M(p, p);
                const double aqq = M(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                // smaller root of t^2 + 2 tau t - 1 = 0 for a stable rotation
                const double t = (tau >= 0.0)
                                     ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                     : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (int i = 0; i < n; ++i) {
                    const double mip = M(i, p);
                    const double miq = M(i, q);
                    M(i, p) = c * mip - s * miq;
                    M(i, q) = s * mip + c * miq;
                }
                for (int i = 0; i < n; ++i) {
                    const double mpi = M(p, i);
                    const double mqi = M(q, i);
                    M(p, i) = c * mpi - s * mqi;
                    M(q, i) = s * mpi + c * mqi;
                }
                M(p, q) = 0.0;
                M(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double vip = V(i, p);
                    const double viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return M(a, a) < M(b, b); });

    eigenvalues.resize(n);
    eigenvectors.resize(n, n);
    for (int j = 0; j < n; ++j) {
        eigenvalues[j] = M(order[j], order[j]);
        eigenvectors.col(j) = V.col(order[j]);
    }
}

LaplacianOperator build_laplacian(const Graph& g, LaplacianKind kind,
                                  int dense_threshold) {
    Eigen::SparseMatrix<double> m = laplacian_matrix(g, kind);
    const int n = g.num_nodes();

    double lambda_max = 0.0;
    if (n <= dense_threshold) {
        Eigen::VectorXd evals;
        Eigen::MatrixXd evecs;
        jacobi_eigensymmetric(Eigen::MatrixXd(m), evals, evecs);
        lambda_max = evals[n - 1];
    } else {
        LaplacianOperator tmp(g, kind, m, 0.0);
        lambda_max = estimate_lambda_max(tmp).value;
    }
    if (kind == LaplacianKind::Normalized) lambda_max = std::min(lambda_max, 2.0);
    lambda_max = std::max(lambda_max, 0.0);
    return LaplacianOperator(g, kind, m, lambda_max);
}

SpectralDecomposition decompose(const LaplacianOperator& lap, int dense_threshold) {
    const int n = lap.num_nodes();
    if (n > dense_threshold)
        throw CapabilityError(
            "decompose: n = " + std::to_string(n) + " exceeds the dense threshold " +
            std::to_string(dense_threshold) + "; use the Chebyshev filtering path");
    SpectralDecomposition d;
    jacobi_eigensymmetric(lap.dense(), d.eigenvalues, d.eigenvectors);
    return d;
}

LambdaMaxEstimate estimate_lambda_max(const LaplacianOperator& lap, double tol,
                                      int max_iters) {
    const int n = lap.num_nodes();
    if (lap.graph().num_edges() == 0)
        throw DegenerateInputError("estimate_lambda_max: graph has no edges");

    const bool deflate_constant = lap.kind() == LaplacianKind::Combinatorial;

    Rng rng(0x5bd1e995);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    auto remove_constant = [&](Eigen::VectorXd& x) {
        x.array() -= x.mean();
    };
    if (deflate_constant) remove_constant(v);
    v.normalize();

    Eigen::VectorXd w(n);
    double rho_prev = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        lap.apply(v, w);
        if (deflate_constant) remove_constant(w);
        const double rho = v.dot(w);
        const double norm = w.norm();
        if (norm <= 0.0) break;
        v = w / norm;
        if (it > 0 && std::abs(rho - rho_prev) <= tol * std::max(std::abs(rho), 1e-30)) {
            return {1.01 * std::max(rho, norm), false};
        }
        rho_prev = rho;
    }
    const double fallback = lap.kind() == LaplacianKind::Combinatorial
                                ? 2.0 * lap.graph().max_degree()
                                : 2.0;
    return {fallback, true};
}

} // namespace specshape
