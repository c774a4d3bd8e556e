#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "specshape/errors.hpp"
#include "specshape/experiments.hpp"

namespace specshape {

const std::array<const char*, SimilarityFeatures::kCount>& SimilarityFeatures::names() {
    static const std::array<const char*, kCount> n = {
        "spectral_distance",     "degree_correlation", "clustering_similarity",
        "path_length_similarity", "density_similarity", "signal_correlation",
        "spectral_similarity",    "moment_similarity"};
    return n;
}

double SimilarityFeatures::by_index(int i) const {
    switch (i) {
        case 0: return spectral_distance;
        case 1: return degree_correlation;
        case 2: return clustering_similarity;
        case 3: return path_length_similarity;
        case 4: return density_similarity;
        case 5: return signal_correlation;
        case 6: return spectral_similarity;
        case 7: return moment_similarity;
    }
    throw ContractError("SimilarityFeatures::by_index: out of range");
}

namespace {

constexpr double kEps = 1e-12;

/// 1 - |a - b| / max(a, b, eps); equals 1 when a == b, stays in [0, 1] for
/// nonnegative inputs.
double gap_similarity(double a, double b) {
    return 1.0 - std::abs(a - b) / std::max({a, b, kEps});
}

/// Linear interpolation of a sorted vector onto m equally spaced fractional
/// positions; identity when m equals the input length.
std::vector<double> resample(const std::vector<double>& v, std::size_t m) {
    if (v.empty()) throw ContractError("resample: empty input");
    std::vector<double> out(m);
    if (v.size() == 1) {
        std::fill(out.begin(), out.end(), v[0]);
        return out;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double pos = m == 1 ? 0.0
                                  : static_cast<double>(i) * (v.size() - 1) / (m - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        const double frac = pos - lo;
        out[i] = v[lo] * (1.0 - frac) + v[hi] * frac;
    }
    return out;
}

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;
};

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
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
    if (denom < kEps) return {0.0, true};
    return {sxy / denom, false};
}

std::vector<std::vector<int>> adjacency(const Graph& g) {
    std::vector<std::vector<int>> adj(g.num_nodes());
    for (const auto& e : g.edges()) {
        adj[e.u].push_back(e.v);
        adj[e.v].push_back(e.u);
    }
    return adj;
}

/// Global clustering coefficient: 3 * triangles / wedges (unweighted).
double global_clustering(const Graph& g) {
    const auto adj = adjacency(g);
    std::vector<std::vector<bool>> is_nb(g.num_nodes(),
                                         std::vector<bool>(g.num_nodes(), false));
    for (const auto& e : g.edges()) {
        is_nb[e.u][e.v] = true;
        is_nb[e.v][e.u] = true;
    }
    double wedges = 0.0;
    for (const auto& nb : adj) {
        const double d = static_cast<double>(nb.size());
        wedges += d * (d - 1.0) / 2.0;
    }
    if (wedges == 0.0) return 0.0;
    // Summing each edge's common-neighbor count sees every triangle three
    // times (once per edge), so this is 3 * triangles directly.
    double closed = 0.0;
    for (const auto& e : g.edges())
        for (int w : adj[e.u])
            if (w != e.v && is_nb[e.v][w]) closed += 1.0;
    return closed / wedges;
}

/// Mean shortest-path length over unordered pairs of the largest connected
/// component (unweighted BFS). Zero when that component is a single node.
double average_path_length(const Graph& g) {
    const auto adj = adjacency(g);
    const int n = g.num_nodes();
    std::vector<int> comp(n, -1);
    int best_comp = -1;
    std::size_t best_size = 0;
    for (int s = 0, c = 0; s < n; ++s) {
        if (comp[s] != -1) continue;
        std::size_t size = 0;
        std::deque<int> q{s};
        comp[s] = c;
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            ++size;
            for (int v : adj[u])
                if (comp[v] == -1) {
                    comp[v] = c;
                    q.push_back(v);
                }
        }
        if (size > best_size) {
            best_size = size;
            best_comp = c;
        }
        ++c;
    }
    if (best_size < 2) return 0.0;

    double total = 0.0;
    std::size_t pairs = 0;
    std::vector<int> dist(n);
    for (int s = 0; s < n; ++s) {
        if (comp[s] != best_comp) continue;
        std::fill(dist.begin(), dist.end(), -1);
        dist[s] = 0;
        std::deque<int> q{s};
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (int v : adj[u])
                if (dist[v] == -1) {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
        }
        for (int v = s + 1; v < n; ++v)
            if (comp[v] == best_comp) {
                total += dist[v];
                ++pairs;
            }
    }
    return total / pairs;
}

double edge_density(const Graph& g) {
    const double n = g.num_nodes();
    return 2.0 * static_cast<double>(g.num_edges()) / (n * (n - 1.0));
}

std::vector<double> sorted_eigenvalues(const SpectralDecomposition& d) {
    std::vector<double> v(d.eigenvalues.data(),
                          d.eigenvalues.data() + d.eigenvalues.size());
    std::sort(v.begin(), v.end());
    return v;
}

/// Mean squared spectral coefficient per eigenvalue, sorted ascending.
std::vector<double> sorted_spectral_energy(const SpectralDecomposition& d,
                                           const SignalBatch& x) {
    const Eigen::MatrixXd coeffs = d.eigenvectors.transpose() * x.values;
    std::vector<double> e(coeffs.rows());
    for (Eigen::Index j = 0; j < coeffs.rows(); ++j)
        e[j] = coeffs.row(j).squaredNorm() / coeffs.cols();
    std::sort(e.begin(), e.end());
    return e;
}

std::vector<double> eigenvalue_histogram(const std::vector<double>& lambdas,
                                         double upper, int bins) {
    std::vector<double> h(bins, 0.0);
    for (double l : lambdas) {
        int b = static_cast<int>(l / upper * bins);
        b = std::clamp(b, 0, bins - 1);
        h[b] += 1.0;
    }
    return h;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom < kEps ? 0.0 : dot / denom;
}

} // namespace

SimilarityFeatures similarity_features(const GraphView& source,
                                       const GraphView& target) {
    if (!source.graph || !source.decomp || !source.signals || !target.graph ||
        !target.decomp || !target.signals)
        throw ContractError("similarity_features: incomplete view");

    SimilarityFeatures f;

    const std::vector<double> ev_s = sorted_eigenvalues(*source.decomp);
    const std::vector<double> ev_t = sorted_eigenvalues(*target.decomp);
    const std::size_t m = std::max(ev_s.size(), ev_t.size());
    {
        const std::vector<double> a = resample(ev_s, m);
        const std::vector<double> b = resample(ev_t, m);
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
        f.spectral_distance = std::sqrt(acc);
    }

    {
        std::vector<double> dg_s = source.graph->degrees();
        std::vector<double> dg_t = target.graph->degrees();
        std::sort(dg_s.begin(), dg_s.end());
        std::sort(dg_t.begin(), dg_t.end());
        const std::size_t md = std::max(dg_s.size(), dg_t.size());
        const PearsonResult p = pearson(resample(dg_s, md), resample(dg_t, md));
        f.degree_correlation = p.value;
        f.degenerate_pearson |= p.degenerate;
    }

    f.clustering_similarity =
        gap_similarity(global_clustering(*source.graph), global_clustering(*target.graph));
    f.path_length_similarity = gap_similarity(average_path_length(*source.graph),
                                              average_path_length(*target.graph));
    f.density_similarity =
        gap_similarity(edge_density(*source.graph), edge_density(*target.graph));

    {
        const std::vector<double> en_s =
            sorted_spectral_energy(*source.decomp, *source.signals);
        const std::vector<double> en_t =
            sorted_spectral_energy(*target.decomp, *target.signals);
        const std::size_t me = std::max(en_s.size(), en_t.size());
        const PearsonResult p = pearson(resample(en_s, me), resample(en_t, me));
        f.signal_correlation = p.value;
        f.degenerate_pearson |= p.degenerate;
    }

    {
        const double upper =
            std::max({source.decomp->lambda_max(), target.decomp->lambda_max(), kEps});
        f.spectral_similarity = cosine(eigenvalue_histogram(ev_s, upper, 32),
                                       eigenvalue_histogram(ev_t, upper, 32));
    }

    {
        double sim = 0.0;
        for (int r = 1; r <= 3; ++r) {
            double ms = 0.0, mt = 0.0;
            for (double l : ev_s) ms += std::pow(l, r);
            for (double l : ev_t) mt += std::pow(l, r);
            ms /= ev_s.size();
            mt /= ev_t.size();
            sim += gap_similarity(ms, mt);
        }
        f.moment_similarity = sim / 3.0;
    }

    return f;
}

} // namespace specshape
