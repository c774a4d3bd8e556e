#ifndef SPECSHAPE_GRAPH_HPP
#define SPECSHAPE_GRAPH_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace specshape {

struct Edge {
    int u;
    int v;
    double w;
};

/// Weighted undirected graph. Edges are stored canonically: u < v, sorted by
/// (u, v), no duplicates, no self-loops, strictly positive weights.
class Graph {
public:
    Graph(int num_nodes, std::vector<Edge> edges);

    int num_nodes() const { return num_nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t num_edges() const { return edges_.size(); }

    std::vector<double> degrees() const;
    double max_degree() const;

private:
    int num_nodes_;
    std::vector<Edge> edges_;
};

// Family-specific generator parameters. Each struct carries the node count it
// implies; `weight` is applied to every sampled edge (unit weights by default).

struct ErdosRenyiParams {
    int n;
    double p;
    double weight = 1.0;
};

struct BarabasiAlbertParams {
    int n;
    int m; // edges added per new node, 1 <= m < n
    double weight = 1.0;
};

struct WattsStrogatzParams {
    int n;
    int k; // even ring degree, k < n
    double beta;
    double weight = 1.0;
};

struct Grid2DParams {
    int rows;
    int cols;
    double weight = 1.0;
};

struct StochasticBlockModelParams {
    std::vector<int> block_sizes;
    double p_in;
    double p_out;
    double weight = 1.0;
};

using FamilyParams = std::variant<ErdosRenyiParams, BarabasiAlbertParams,
                                  WattsStrogatzParams, Grid2DParams,
                                  StochasticBlockModelParams>;

/// Canonical family name ("erdos_renyi", "barabasi_albert", "watts_strogatz",
/// "grid2d", "sbm"); used in serialized graphs and configs.
std::string family_name(const FamilyParams& params);

int family_num_nodes(const FamilyParams& params);

/// Samples a graph. Deterministic for fixed (params, seed). Disconnected
/// samples are returned as sampled; no component extraction.
Graph generate_graph(const FamilyParams& params, std::uint64_t seed);

// JSON serialization. The document records n, the canonical edge list,
// and the generator provenance (family, params, seed).
std::string graph_to_json(const Graph& g, const FamilyParams& params,
                          std::uint64_t seed);
Graph graph_from_json(const std::string& text);

} // namespace specshape

#endif
