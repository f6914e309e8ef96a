#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fwalk/core.hpp"
#include "fwalk/linalg.hpp"
#include "fwalk/rng.hpp"

namespace fwalk {

// Sorted node indices, no duplicates, all in [0, N).
using NodeSet = std::vector<int>;

// Undirected weighted graph. Immutable after construction; remove_nodes
// returns a new value. Adjacency lists are sorted by neighbor index.
// labels[i] is the node's id in the original input (identity unless the
// graph came out of remove_nodes or a 1-based file).
struct Graph {
    int n = 0;
    std::vector<std::vector<std::pair<int, double>>> adj;
    Vec deg;
    std::vector<long long> labels;

    int edge_count() const {
        std::size_t twice = 0;
        for (const auto& nb : adj) twice += nb.size();
        return static_cast<int>(twice / 2);
    }
};

namespace detail {
inline void add_undirected_edge(Graph& g, int u, int v, double w) {
    g.adj[u].emplace_back(v, w);
    g.adj[v].emplace_back(u, w);
    g.deg[u] += w;
    g.deg[v] += w;
}

inline void finalize_adjacency(Graph& g) {
    for (auto& nb : g.adj) std::sort(nb.begin(), nb.end());
}
}  // namespace detail

inline Graph make_graph(int n, const std::vector<std::tuple<int, int, double>>& edges) {
    if (n < 0) throw ValidationError("make_graph: negative node count");
    Graph g;
    g.n = n;
    g.adj.resize(n);
    g.deg.assign(n, 0.0);
    g.labels.resize(n);
    for (int i = 0; i < n; ++i) g.labels[i] = i;
    std::map<std::pair<int, int>, double> seen;
    for (auto [u, v, w] : edges) {
        if (u < 0 || u >= n || v < 0 || v >= n) throw ValidationError("make_graph: node index out of range");
        if (u == v) throw ValidationError("make_graph: self-loop");
        if (w < 0) throw ValidationError("make_graph: negative weight");
        auto key = std::minmax(u, v);
        if (!seen.emplace(key, w).second) throw ValidationError("make_graph: duplicate edge");
    }
    for (const auto& [key, w] : seen) detail::add_undirected_edge(g, key.first, key.second, w);
    detail::finalize_adjacency(g);
    return g;
}

template <typename F>
inline void for_each_edge(const Graph& g, F&& f) {
    for (int u = 0; u < g.n; ++u)
        for (const auto& [v, w] : g.adj[u])
            if (u < v) f(u, v, w);
}

struct ParseOptions {
    int index_base = 0;
    // When set, a pair listed once in each direction with equal total weight
    // collapses to a single undirected edge (Konect files list both arcs).
    // Same-direction repeats, and asymmetric directed totals, sum.
    bool directed_input_symmetrize = false;
};

// Edge-list text: one "u v" or "u v w" per non-comment line; '#' and '%'
// start comments. Isolated indices up to the max index become degree-0
// nodes. Duplicate edges merge by weight summation except for the
// symmetrize rule above.
inline Graph parse_edge_list(const std::string& text, const ParseOptions& opts = {}) {
    struct PairW {
        double fwd = 0.0, rev = 0.0;
        bool has_fwd = false, has_rev = false;
    };
    std::map<std::pair<int, int>, PairW> pairs;
    long line_no = 0;
    long long max_idx = -1;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos) continue;
        if (line[start] == '#' || line[start] == '%') continue;
        std::istringstream ls(line);
        long long u, v;
        double w = 1.0;
        if (!(ls >> u >> v)) throw ParseError(line_no, "expected 'u v' or 'u v w'");
        if (ls >> w) {
            // three-column form
        } else {
            ls.clear();
        }
        std::string rest;
        if (ls >> rest) throw ParseError(line_no, "trailing tokens: '" + rest + "'");
        u -= opts.index_base;
        v -= opts.index_base;
        if (u < 0 || v < 0) throw ParseError(line_no, "node index below index base");
        if (u == v) throw ParseError(line_no, "self-loop rejected");
        if (w < 0) throw ParseError(line_no, "negative edge weight");
        max_idx = std::max({max_idx, u, v});
        const int a = static_cast<int>(u), b = static_cast<int>(v);
        PairW& p = pairs[{std::min(a, b), std::max(a, b)}];
        if (u < v) {
            p.fwd += w;
            p.has_fwd = true;
        } else {
            p.rev += w;
            p.has_rev = true;
        }
    }
    Graph g;
    g.n = static_cast<int>(max_idx + 1);
    g.adj.resize(g.n);
    g.deg.assign(g.n, 0.0);
    g.labels.resize(g.n);
    for (int i = 0; i < g.n; ++i) g.labels[i] = i + opts.index_base;
    for (const auto& [key, p] : pairs) {
        double w;
        if (opts.directed_input_symmetrize && p.has_fwd && p.has_rev && p.fwd == p.rev)
            w = p.fwd;
        else
            w = p.fwd + p.rev;
        detail::add_undirected_edge(g, key.first, key.second, w);
    }
    detail::finalize_adjacency(g);
    return g;
}

inline Graph load_edge_list(const std::string& path, const ParseOptions& opts = {}) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open graph file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_edge_list(ss.str(), opts);
}

// Recompute degrees from adjacency and check symmetry; used by tests and by
// constructors of derived objects that assume a well-formed graph.
inline void validate_graph(const Graph& g) {
    if (static_cast<int>(g.adj.size()) != g.n || static_cast<int>(g.deg.size()) != g.n)
        throw ValidationError("graph: inconsistent sizes");
    for (int u = 0; u < g.n; ++u) {
        double d = 0.0;
        for (const auto& [v, w] : g.adj[u]) {
            if (v < 0 || v >= g.n || v == u) throw ValidationError("graph: bad adjacency entry");
            d += w;
            const auto& back = g.adj[v];
            auto it = std::lower_bound(back.begin(), back.end(), std::make_pair(u, -1.0));
            if (it == back.end() || it->first != u || it->second != w)
                throw ValidationError("graph: asymmetric adjacency");
        }
        double scale = std::max(1.0, std::abs(g.deg[u]));
        if (std::abs(d - g.deg[u]) > 1e-12 * scale) throw NumericError("graph: degree drift");
    }
}

inline Matrix adjacency_matrix(const Graph& g) {
    if (g.n > 4096) throw ValidationError("adjacency_matrix: dense view capped at N <= 4096");
    Matrix A(g.n, g.n);
    for (int u = 0; u < g.n; ++u)
        for (const auto& [v, w] : g.adj[u]) A(u, v) = w;
    return A;
}

// L = D - A. Row sums vanish by construction.
inline Matrix combinatorial_laplacian(const Graph& g) {
    Matrix L(g.n, g.n);
    for (int u = 0; u < g.n; ++u) {
        for (const auto& [v, w] : g.adj[u]) L(u, v) = -w;
        L(u, u) = g.deg[u];
    }
    return L;
}

// calL = I - D^{-1/2} A D^{-1/2}; kernel vector is D^{1/2} 1.
inline Matrix normalized_laplacian(const Graph& g) {
    for (int u = 0; u < g.n; ++u)
        if (!(g.deg[u] > 0.0))
            throw ValidationError("normalized_laplacian: zero-degree node " + std::to_string(u));
    Matrix M(g.n, g.n);
    for (int u = 0; u < g.n; ++u) {
        double su = 1.0 / std::sqrt(g.deg[u]);
        for (const auto& [v, w] : g.adj[u]) M(u, v) = -w * su / std::sqrt(g.deg[v]);
        M(u, u) = 1.0;
    }
    return M;
}

// L_rw = I - D^{-1} A. Similar to calL via D^{1/2}; not symmetric.
inline Matrix random_walk_laplacian(const Graph& g) {
    for (int u = 0; u < g.n; ++u)
        if (!(g.deg[u] > 0.0))
            throw ValidationError("random_walk_laplacian: zero-degree node " + std::to_string(u));
    Matrix M(g.n, g.n);
    for (int u = 0; u < g.n; ++u) {
        for (const auto& [v, w] : g.adj[u]) M(u, v) = -w / g.deg[u];
        M(u, u) = 1.0;
    }
    return M;
}

// BFS from node 0 over positive-weight edges.
inline bool is_connected(const Graph& g) {
    if (g.n <= 1) return true;
    std::vector<char> seen(g.n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (const auto& [v, w] : g.adj[u]) {
            if (w > 0.0 && !seen[v]) {
                seen[v] = 1;
                ++reached;
                q.push(v);
            }
        }
    }
    return reached == g.n;
}

// Induced subgraph on the complement of s, densely reindexed; labels carry
// the removed nodes' original ids forward.
inline Graph remove_nodes(const Graph& g, const NodeSet& s) {
    std::vector<char> gone(g.n, 0);
    for (int v : s) {
        if (v < 0 || v >= g.n) throw ValidationError("remove_nodes: index out of range");
        gone[v] = 1;
    }
    int kept = 0;
    std::vector<int> newid(g.n, -1);
    for (int u = 0; u < g.n; ++u)
        if (!gone[u]) newid[u] = kept++;
    if (kept == 0) throw ValidationError("remove_nodes: set covers all nodes");
    Graph h;
    h.n = kept;
    h.adj.resize(kept);
    h.deg.assign(kept, 0.0);
    h.labels.resize(kept);
    for (int u = 0; u < g.n; ++u) {
        if (gone[u]) continue;
        h.labels[newid[u]] = g.labels[u];
        for (const auto& [v, w] : g.adj[u]) {
            if (gone[v]) continue;
            h.adj[newid[u]].emplace_back(newid[v], w);
            h.deg[newid[u]] += w;
        }
    }
    detail::finalize_adjacency(h);
    return h;
}

// Rejection sampling of a k-subset whose removal keeps the rest connected.
inline NodeSet sample_removable_set(const Graph& g, int k, Rng& rng, int max_attempts = 10000) {
    if (k < 0 || k >= g.n) throw ValidationError("sample_removable_set: need 0 <= k < N");
    if (k == 0) return {};
    std::vector<int> idx(g.n);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        for (int i = 0; i < g.n; ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(rng.below(g.n - i));
            std::swap(idx[i], idx[j]);
        }
        NodeSet s(idx.begin(), idx.begin() + k);
        std::sort(s.begin(), s.end());
        if (is_connected(remove_nodes(g, s))) return s;
    }
    throw ValidationError("sample_removable_set: no connectivity-preserving set in " +
                          std::to_string(max_attempts) + " attempts");
}

// Cut(S) = (1/2) sum_{i in S} sum_{j notin S} A_ij: each crossing edge
// counts its weight once.
inline double cut_value(const Graph& g, const NodeSet& s) {
    if (s.empty() || static_cast<int>(s.size()) >= g.n)
        throw ValidationError("cut_value: set must be nonempty and proper");
    std::vector<char> in(g.n, 0);
    for (int v : s) {
        if (v < 0 || v >= g.n) throw ValidationError("cut_value: index out of range");
        in[v] = 1;
    }
    double c = 0.0;
    for_each_edge(g, [&](int u, int v, double w) {
        if (in[u] != in[v]) c += w;
    });
    return c;
}

inline double rcut_value(const Graph& g, const NodeSet& s) {
    double c = cut_value(g, s);
    double a = static_cast<double>(s.size());
    double b = static_cast<double>(g.n) - a;
    return c / a + c / b;
}

struct RcutResult {
    NodeSet set;
    double value;
};

// Exhaustive RCut minimum over all 2^{N-1} - 1 bipartitions; the canonical
// side is the one containing node 0 (always the lexicographically smaller
// side). Ties go to the lexicographically smallest member set.
inline RcutResult brute_force_rcut(const Graph& g) {
    if (g.n > 16) throw ValidationError("brute_force_rcut: N <= 16 only");
    if (g.n < 2) throw ValidationError("brute_force_rcut: need at least 2 nodes");
    std::vector<std::tuple<int, int, double>> edges;
    for_each_edge(g, [&](int u, int v, double w) { edges.emplace_back(u, v, w); });
    const std::uint32_t full = (1u << g.n) - 1;
    double best = 0.0;
    NodeSet best_set;
    for (std::uint32_t mask = 1; mask < full; mask += 2) {  // node 0 always inside
        double c = 0.0;
        for (auto [u, v, w] : edges)
            if (((mask >> u) ^ (mask >> v)) & 1u) c += w;
        int sz = std::popcount(mask);
        double r = c / sz + c / (g.n - sz);
        if (best_set.empty() || r < best) {
            best = r;
            best_set.clear();
            for (int i = 0; i < g.n; ++i)
                if ((mask >> i) & 1u) best_set.push_back(i);
        } else if (r == best) {
            NodeSet cand;
            for (int i = 0; i < g.n; ++i)
                if ((mask >> i) & 1u) cand.push_back(i);
            if (std::lexicographical_compare(cand.begin(), cand.end(), best_set.begin(), best_set.end()))
                best_set = std::move(cand);
        }
    }
    return {best_set, best};
}

// Fixture constructors.

inline Graph path_graph(int n) {
    std::vector<std::tuple<int, int, double>> e;
    for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1, 1.0);
    return make_graph(n, e);
}

inline Graph cycle_graph(int n) {
    if (n < 3) throw ValidationError("cycle_graph: need n >= 3");
    std::vector<std::tuple<int, int, double>> e;
    for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n, 1.0);
    return make_graph(n, e);
}

inline Graph complete_graph(int n) {
    std::vector<std::tuple<int, int, double>> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) e.emplace_back(i, j, 1.0);
    return make_graph(n, e);
}

// Star with node 0 at the center.
inline Graph star_graph(int leaves) {
    std::vector<std::tuple<int, int, double>> e;
    for (int i = 1; i <= leaves; ++i) e.emplace_back(0, i, 1.0);
    return make_graph(leaves + 1, e);
}

// Random recursive tree plus uniformly drawn extra non-edges: connected by
// construction, unit weights, exactly m edges.
inline Graph random_connected_gnm(int n, int m, Rng& rng) {
    if (n < 2) throw ValidationError("random_connected_gnm: need n >= 2");
    long long max_m = static_cast<long long>(n) * (n - 1) / 2;
    if (m < n - 1 || m > max_m) throw ValidationError("random_connected_gnm: m out of range");
    std::set<std::pair<int, int>> chosen;
    for (int v = 1; v < n; ++v) {
        int u = static_cast<int>(rng.below(v));
        chosen.insert(std::minmax(u, v));
    }
    while (static_cast<int>(chosen.size()) < m) {
        int u = static_cast<int>(rng.below(n));
        int v = static_cast<int>(rng.below(n));
        if (u == v) continue;
        chosen.insert(std::minmax(u, v));
    }
    std::vector<std::tuple<int, int, double>> e;
    e.reserve(chosen.size());
    for (auto [u, v] : chosen) e.emplace_back(u, v, 1.0);
    return make_graph(n, e);
}

// G(n, p) conditioned on connectivity by rejection.
inline Graph random_connected_gnp(int n, double p, Rng& rng, int max_attempts = 1000) {
    if (n < 2) throw ValidationError("random_connected_gnp: need n >= 2");
    if (!(p > 0.0 && p <= 1.0)) throw ValidationError("random_connected_gnp: p in (0,1] required");
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<std::tuple<int, int, double>> e;
        for (int u = 0; u < n; ++u)
            for (int v = u + 1; v < n; ++v)
                if (rng.uniform01() <= p) e.emplace_back(u, v, 1.0);
        Graph g = make_graph(n, e);
        if (is_connected(g)) return g;
    }
    throw ValidationError("random_connected_gnp: no connected draw; raise p");
}

}  // namespace fwalk
