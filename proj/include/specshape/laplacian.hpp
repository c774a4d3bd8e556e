#ifndef SPECSHAPE_LAPLACIAN_HPP
#define SPECSHAPE_LAPLACIAN_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "specshape/graph.hpp"

namespace specshape {

enum class LaplacianKind { Combinatorial, Normalized };

/// Default size cap for dense eigendecomposition.
inline constexpr int kDenseThreshold = 512;

struct LambdaMaxEstimate {
    double value = 0.0;
    bool from_fallback = false; // power iteration did not converge; value is
                                // the conservative bound instead
};

/// Symmetric graph Laplacian with a certified upper bound on its spectrum.
/// Immutable after construction; safe to share across threads.
class LaplacianOperator {
public:
    LaplacianOperator(Graph graph, LaplacianKind kind,
                      const Eigen::SparseMatrix<double>& matrix,
                      double lambda_max);

    const Graph& graph() const { return graph_; }
    LaplacianKind kind() const { return kind_; }
    int num_nodes() const { return graph_.num_nodes(); }

    /// Upper bound on the largest eigenvalue (exact when built densely).
    double lambda_max() const { return lambda_max_; }

    const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

    /// y = L x. The single sparse kernel every filtering path goes through.
    void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
        y.noalias() = matrix_ * x;
    }

    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }

private:
    Graph graph_;
    LaplacianKind kind_;
    Eigen::SparseMatrix<double> matrix_;
    double lambda_max_;
};

/// Exact eigendecomposition L = U diag(eigenvalues) U^T, eigenvalues sorted
/// ascending, columns of U orthonormal.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    int num_nodes() const { return static_cast<int>(eigenvalues.size()); }
    double lambda_max() const { return eigenvalues.size() ? eigenvalues[eigenvalues.size() - 1] : 0.0; }
};

/// Builds the combinatorial (D - W) or normalized (I - D^{-1/2} W D^{-1/2})
/// Laplacian. lambda_max is exact for n <= dense_threshold, otherwise a
/// power-iteration bound inflated by 1.01. Normalized spectra are capped at 2.
/// Throws DegenerateInputError for isolated nodes under the normalized kind.
LaplacianOperator build_laplacian(const Graph& g, LaplacianKind kind,
                                  int dense_threshold = kDenseThreshold);

/// Dense eigendecomposition via cyclic Jacobi rotations.
/// Throws CapabilityError when n exceeds the threshold (use the Chebyshev
/// path for large graphs).
SpectralDecomposition decompose(const LaplacianOperator& lap,
                                int dense_threshold = kDenseThreshold);

/// Jacobi eigensolver on an arbitrary symmetric dense matrix.
/// Exposed for reuse; sorts eigenvalues ascending.
void jacobi_eigensymmetric(const Eigen::MatrixXd& A, Eigen::VectorXd& eigenvalues,
                           Eigen::MatrixXd& eigenvectors);

/// Power-iteration bound on the largest eigenvalue, deflating the constant
/// vector for combinatorial Laplacians, with a 1.01 safety factor. Falls back
/// to 2*max_degree (combinatorial) or 2 (normalized) on non-convergence.
LambdaMaxEstimate estimate_lambda_max(const LaplacianOperator& lap,
                                      double tol = 1e-7, int max_iters = 1000);

} // namespace specshape

#endif
