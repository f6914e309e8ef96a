#pragma once

#include <cmath>
#include <optional>
#include <queue>
#include <string>

#include "fwalk/core.hpp"
#include "fwalk/graph.hpp"
#include "fwalk/linalg.hpp"

namespace fwalk {

// CTMC transition-rate matrix. q(j,i) is the rate of a j -> i jump for
// i != j, so densities evolve by dx/dt = Q^T x and the diagonal carries the
// negated exit rate. Kernels are immutable after construction and safe to
// share across threads.
struct Kernel {
    Matrix q;
    Vec pi;          // stationary distribution; empty when unknown
    bool reversible = false;

    int n() const { return static_cast<int>(q.rows); }
    bool has_pi() const { return !pi.empty(); }
    double exit_rate(int j) const { return -q(j, j); }
};

// <x,y> = x^T Pi^{-1} y. For pi proportional to 1 this is a positive
// multiple of the Euclidean inner product, so every normalized quantity
// built from it (RQ, CS, V of a normalized vector) reduces to the
// plain Euclidean version.
struct PiInnerProduct {
    Vec pi;

    double operator()(const Vec& x, const Vec& y) const {
        if (x.size() != pi.size() || y.size() != pi.size())
            throw ValidationError("pi_inner: dimension mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) s += x[i] * y[i] / pi[i];
        return s;
    }

    double norm(const Vec& x) const { return std::sqrt((*this)(x, x)); }
};

inline double pi_inner(const Vec& pi, const Vec& x, const Vec& y) {
    return PiInnerProduct{pi}(x, y);
}

namespace detail {

inline void validate_rates(const Matrix& q) {
    const std::size_t n = q.rows;
    if (q.cols != n || n == 0) throw ValidationError("kernel: rates must be square and nonempty");
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && q(i, j) < 0.0) throw ValidationError("kernel: negative off-diagonal rate");
            row_sum += q(i, j);
        }
        if (std::abs(row_sum) > 1e-12) throw ValidationError("kernel: row sum beyond 1e-12");
    }
}

inline void validate_stationary(const Matrix& q, const Vec& pi) {
    if (pi.size() != q.rows) throw ValidationError("kernel: pi dimension mismatch");
    double total = 0.0;
    for (double p : pi) {
        if (!(p > 0.0)) throw ValidationError("kernel: pi must be strictly positive");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("kernel: pi must sum to 1");
    for (std::size_t j = 0; j < q.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.rows; ++i) s += pi[i] * q(i, j);
        if (std::abs(s) > 1e-10) throw ValidationError("kernel: pi^T Q exceeds 1e-10");
    }
}

}  // namespace detail

// Residual max_{i != j} |pi_i Q_ij - pi_j Q_ji|; zero iff detailed balance.
inline double check_detailed_balance(const Kernel& k) {
    if (!k.has_pi()) throw ValidationError("check_detailed_balance: kernel has no stationary distribution");
    double r = 0.0;
    for (int i = 0; i < k.n(); ++i)
        for (int j = i + 1; j < k.n(); ++j)
            r = std::max(r, std::abs(k.pi[i] * k.q(i, j) - k.pi[j] * k.q(j, i)));
    return r;
}

// General constructor; pi optional. The reversible flag is computed, never
// asserted.
inline Kernel kernel_from_rates(Matrix q, Vec pi = {}) {
    detail::validate_rates(q);
    Kernel k;
    k.q = std::move(q);
    if (!pi.empty()) {
        detail::validate_stationary(k.q, pi);
        k.pi = std::move(pi);
        k.reversible = check_detailed_balance(k) <= 1e-10;
    }
    return k;
}

// Q = -L. Uniform stationary distribution; detailed balance is exact by
// symmetry.
inline Kernel from_combinatorial_laplacian(const Matrix& L) {
    const std::size_t n = L.rows;
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q(i, j) = -L(i, j);
    return kernel_from_rates(std::move(q), Vec(n, 1.0 / static_cast<double>(n)));
}

inline Kernel combinatorial_kernel(const Graph& g) {
    return from_combinatorial_laplacian(combinatorial_laplacian(g));
}

// Q_rw = -L_rw = D^{-1}A - I with pi = d / (d^T 1).
inline Kernel random_walk_kernel(const Graph& g) {
    Matrix lrw = random_walk_laplacian(g);
    const std::size_t n = lrw.rows;
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q(i, j) = -lrw(i, j);
    double total = sum(g.deg);
    Vec pi(n);
    for (std::size_t i = 0; i < n; ++i) pi[i] = g.deg[i] / total;
    Kernel k = kernel_from_rates(std::move(q), std::move(pi));
    if (!k.reversible) throw NumericError("random_walk_kernel: detailed balance residual too large");
    return k;
}

// pi as the unique solution of pi^T Q = 0, sum pi = 1: solve Q^T with the
// last row replaced by the normalization equation.
inline Vec stationary_distribution(const Kernel& k) {
    const std::size_t n = k.q.rows;
    Matrix A(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) A(i, j) = k.q(j, i);
    Vec b(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) A(n - 1, j) = 1.0;
    b[n - 1] = 1.0;
    Vec pi;
    try {
        pi = solve_linear(std::move(A), std::move(b));
    } catch (const NumericError&) {
        throw NumericError("stationary_distribution: rank deficiency beyond the trivial one");
    }
    for (double p : pi)
        if (!(p > 0.0)) throw NumericError("stationary_distribution: nonpositive entry (kernel not irreducible?)");
    // residual check against the defining equation
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += pi[i] * k.q(i, j);
        if (std::abs(s) > 1e-10) throw NumericError("stationary_distribution: residual above 1e-10");
    }
    return pi;
}

namespace detail {

// Strong connectivity of the off-diagonal support: forward and reverse BFS.
inline bool support_strongly_connected(const Matrix& P) {
    const int n = static_cast<int>(P.rows);
    if (n <= 1) return false;
    auto reach_all = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        int reached = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v = 0; v < n; ++v) {
                if (v == u || seen[v]) continue;
                double w = forward ? P(u, v) : P(v, u);
                if (w > 0.0) {
                    seen[v] = 1;
                    ++reached;
                    q.push(v);
                }
            }
        }
        return reached == n;
    };
    return reach_all(true) && reach_all(false);
}

}  // namespace detail

// Q_p = P - I for a row-stochastic, irreducible P. pi is solved, and
// reversibility is checked, not assumed.
inline Kernel from_dtmc(const Matrix& P) {
    const std::size_t n = P.rows;
    if (P.cols != n || n == 0) throw ValidationError("from_dtmc: P must be square and nonempty");
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (P(i, j) < 0.0) throw ValidationError("from_dtmc: negative transition probability");
            row += P(i, j);
        }
        if (std::abs(row - 1.0) > 1e-12) throw ValidationError("from_dtmc: row " + std::to_string(i) + " not stochastic");
    }
    if (!detail::support_strongly_connected(P)) throw ValidationError("from_dtmc: reducible support");
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q(i, j) = P(i, j) - (i == j ? 1.0 : 0.0);
    Kernel k;
    detail::validate_rates(q);
    k.q = std::move(q);
    k.pi = stationary_distribution(k);
    k.reversible = check_detailed_balance(k) <= 1e-10;
    return k;
}

// M = Pi^{1/2} Q Pi^{-1/2}. Under detailed balance M is symmetric and the
// left eigenvectors of Q are Pi^{1/2} u for eigenvectors u of M.
inline Matrix symmetrize(const Kernel& k) {
    if (!k.reversible || !k.has_pi())
        throw ValidationError("symmetrize: kernel is not reversible");
    const std::size_t n = k.q.rows;
    Vec sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = std::sqrt(k.pi[i]);
    Matrix M(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) M(i, j) = sq[i] * k.q(i, j) / sq[j];
    if (max_asymmetry(M) > 1e-10) throw NumericError("symmetrize: result asymmetric beyond 1e-10");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (M(i, j) + M(j, i));
            M(i, j) = M(j, i) = v;
        }
    return M;
}

}  // namespace fwalk
