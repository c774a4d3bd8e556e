#include "specshape/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"

namespace specshape {

namespace {

void canonicalize(int n, std::vector<Edge>& edges) {
    for (auto& e : edges) {
        if (e.u == e.v) throw ParameterError("self-loop in edge list");
        if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n)
            throw ParameterError("edge index out of range");
        if (!(e.w > 0.0)) throw ParameterError("edge weight must be positive");
        if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (edges[i].u == edges[i - 1].u && edges[i].v == edges[i - 1].v)
            throw ParameterError("duplicate edge");
    }
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ParameterError(msg);
}

std::vector<Edge> gen_erdos_renyi(const ErdosRenyiParams& p, Rng& rng) {
    require(p.p >= 0.0 && p.p <= 1.0, "erdos_renyi: p must be in [0, 1]");
    std::vector<Edge> edges;
    for (int u = 0; u < p.n; ++u)
        for (int v = u + 1; v < p.n; ++v)
            if (rng.uniform() < p.p) edges.push_back({u, v, p.weight});
    return edges;
}

std::vector<Edge> gen_barabasi_albert(const BarabasiAlbertParams& p, Rng& rng) {
    require(p.m >= 1 && p.m < p.n, "barabasi_albert: need 1 <= m < n");
    std::vector<Edge> edges;
    // Complete seed graph on m+1 nodes, then preferential attachment
    // proportional to current degree (sampling from the endpoint list).
    std::vector<int> endpoints;
    for (int u = 0; u <= p.m; ++u)
        for (int v = u + 1; v <= p.m; ++v) {
            edges.push_back({u, v, p.weight});
            endpoints.push_back(u);
            endpoints.push_back(v);
        }
    for (int v = p.m + 1; v < p.n; ++v) {
        std::set<int> targets;
        while (static_cast<int>(targets.size()) < p.m) {
            const int t = endpoints[rng.uniform_int(endpoints.size())];
            targets.insert(t);
        }
        for (int t : targets) {
            edges.push_back({t, v, p.weight});
            endpoints.push_back(t);
            endpoints.push_back(v);
        }
    }
    return edges;
}

std::vector<Edge> gen_watts_strogatz(const WattsStrogatzParams& p, Rng& rng) {
    require(p.k >= 2 && p.k % 2 == 0 && p.k < p.n,
            "watts_strogatz: need even k with 2 <= k < n");
    require(p.beta >= 0.0 && p.beta <= 1.0, "watts_strogatz: beta must be in [0, 1]");
    // Ring lattice as an adjacency set, then rewire each lattice edge with
    // probability beta, skipping rewires that would duplicate or self-loop.
    std::set<std::pair<int, int>> adj;
    auto key = [](int a, int b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
    for (int u = 0; u < p.n; ++u)
        for (int j = 1; j <= p.k / 2; ++j) adj.insert(key(u, (u + j) % p.n));
    for (int u = 0; u < p.n; ++u) {
        for (int j = 1; j <= p.k / 2; ++j) {
            const int v = (u + j) % p.n;
            if (!adj.count(key(u, v))) continue; // already rewired away
            if (rng.uniform() >= p.beta) continue;
            const int w = static_cast<int>(rng.uniform_int(p.n));
            if (w == u || adj.count(key(u, w))) continue;
            adj.erase(key(u, v));
            adj.insert(key(u, w));
        }
    }
    std::vector<Edge> edges;
    edges.reserve(adj.size());
    for (const auto& [a, b] : adj) edges.push_back({a, b, p.weight});
    return edges;
}

std::vector<Edge> gen_grid2d(const Grid2DParams& p, Rng&) {
    require(p.rows >= 1 && p.cols >= 1, "grid2d: rows and cols must be >= 1");
    std::vector<Edge> edges;
    auto id = [&](int r, int c) { return r * p.cols + c; };
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
            if (c + 1 < p.cols) edges.push_back({id(r, c), id(r, c + 1), p.weight});
            if (r + 1 < p.rows) edges.push_back({id(r, c), id(r + 1, c), p.weight});
        }
    return edges;
}

std::vector<Edge> gen_sbm(const StochasticBlockModelParams& p, Rng& rng) {
    require(!p.block_sizes.empty(), "sbm: block_sizes must be nonempty");
    for (int s : p.block_sizes) require(s >= 1, "sbm: block sizes must be >= 1");
    require(p.p_out >= 0.0 && p.p_in > p.p_out && p.p_in <= 1.0,
            "sbm: need 0 <= p_out < p_in <= 1");
    const int n = std::accumulate(p.block_sizes.begin(), p.block_sizes.end(), 0);
    std::vector<int> block_of(n);
    int node = 0, b = 0;
    for (int s : p.block_sizes) {
        for (int i = 0; i < s; ++i) block_of[node++] = b;
        ++b;
    }
    std::vector<Edge> edges;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            const double prob = block_of[u] == block_of[v] ? p.p_in : p.p_out;
            if (rng.uniform() < prob) edges.push_back({u, v, p.weight});
        }
    return edges;
}

} // namespace

Graph::Graph(int num_nodes, std::vector<Edge> edges)
    : num_nodes_(num_nodes), edges_(std::move(edges)) {
    if (num_nodes_ < 2) throw ParameterError("graph needs at least 2 nodes");
    canonicalize(num_nodes_, edges_);
}

std::vector<double> Graph::degrees() const {
    std::vector<double> d(num_nodes_, 0.0);
    for (const auto& e : edges_) {
        d[e.u] += e.w;
        d[e.v] += e.w;
    }
    return d;
}

double Graph::max_degree() const {
    const auto d = degrees();
    return *std::max_element(d.begin(), d.end());
}

std::string family_name(const FamilyParams& params) {
    struct Visitor {
        std::string operator()(const ErdosRenyiParams&) const { return "erdos_renyi"; }
        std::string operator()(const BarabasiAlbertParams&) const { return "barabasi_albert"; }
        std::string operator()(const WattsStrogatzParams&) const { return "watts_strogatz"; }
        std::string operator()(const Grid2DParams&) const { return "grid2d"; }
        std::string operator()(const StochasticBlockModelParams&) const { return "sbm"; }
    };
    return std::visit(Visitor{}, params);
}

int family_num_nodes(const FamilyParams& params) {
    struct Visitor {
        int operator()(const ErdosRenyiParams& p) const { return p.n; }
        int operator()(const BarabasiAlbertParams& p) const { return p.n; }
        int operator()(const WattsStrogatzParams& p) const { return p.n; }
        int operator()(const Grid2DParams& p) const { return p.rows * p.cols; }
        int operator()(const StochasticBlockModelParams& p) const {
            return std::accumulate(p.block_sizes.begin(), p.block_sizes.end(), 0);
        }
    };
    return std::visit(Visitor{}, params);
}

Graph generate_graph(const FamilyParams& params, std::uint64_t seed) {
    const int n = family_num_nodes(params);
    if (n < 2) throw ParameterError("generate_graph: need n >= 2");
    struct WeightVisitor {
        double operator()(const ErdosRenyiParams& p) const { return p.weight; }
        double operator()(const BarabasiAlbertParams& p) const { return p.weight; }
        double operator()(const WattsStrogatzParams& p) const { return p.weight; }
        double operator()(const Grid2DParams& p) const { return p.weight; }
        double operator()(const StochasticBlockModelParams& p) const { return p.weight; }
    };
    if (!(std::visit(WeightVisitor{}, params) > 0.0))
        throw ParameterError("generate_graph: weight must be positive");

    Rng rng(seed);
    std::vector<Edge> edges = std::visit(
        [&](const auto& p) { return [&] {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ErdosRenyiParams>) return gen_erdos_renyi(p, rng);
            else if constexpr (std::is_same_v<T, BarabasiAlbertParams>) return gen_barabasi_albert(p, rng);
            else if constexpr (std::is_same_v<T, WattsStrogatzParams>) return gen_watts_strogatz(p, rng);
            else if constexpr (std::is_same_v<T, Grid2DParams>) return gen_grid2d(p, rng);
            else return gen_sbm(p, rng);
        }(); },
        params);
    return Graph(n, std::move(edges));
}

namespace {

nlohmann::json params_to_json(const FamilyParams& params) {
    nlohmann::json j;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ErdosRenyiParams>) {
                j = {{"n", p.n}, {"p", p.p}, {"weight", p.weight}};
            } else if constexpr (std::is_same_v<T, BarabasiAlbertParams>) {
                j = {{"n", p.n}, {"m", p.m}, {"weight", p.weight}};
            } else if constexpr (std::is_same_v<T, WattsStrogatzParams>) {
                j = {{"n", p.n}, {"k", p.k}, {"beta", p.beta}, {"weight", p.weight}};
            } else if constexpr (std::is_same_v<T, Grid2DParams>) {
                j = {{"rows", p.rows}, {"cols", p.cols}, {"weight", p.weight}};
            } else {
                j = {{"block_sizes", p.block_sizes},
                     {"p_in", p.p_in},
                     {"p_out", p.p_out},
                     {"weight", p.weight}};
            }
        },
        params);
    return j;
}

} // namespace

std::string graph_to_json(const Graph& g, const FamilyParams& params,
                          std::uint64_t seed) {
    nlohmann::json j;
    j["n"] = g.num_nodes();
    auto edges = nlohmann::json::array();
    for (const auto& e : g.edges()) edges.push_back({e.u, e.v, e.w});
    j["edges"] = std::move(edges);
    j["family"] = family_name(params);
    j["params"] = params_to_json(params);
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

Graph graph_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("graph json: ") + e.what());
    }
    try {
        const int n = j.at("n").get<int>();
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
        }
        return Graph(n, std::move(edges));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("graph json: ") + e.what());
    }
}

} // namespace specshape
