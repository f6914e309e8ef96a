#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "fwalk/core.hpp"
#include "fwalk/graph.hpp"
#include "fwalk/kernel.hpp"
#include "fwalk/linalg.hpp"

namespace fwalk {

// Dense symmetric eigendecomposition. vectors stores eigenvectors as
// columns, matching eigenvalues[j]; both sorted ascending.
struct SpectralResult {
    Vec eigenvalues;
    Matrix vectors;
    int sweeps = 0;
};

// Deterministic sign: the largest-magnitude entry of each eigenvector is
// positive, ties broken by lowest index. Idempotent.
inline void canonical_sign(Vec& v) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double a = std::abs(v[i]);
        if (a > best) {
            best = a;
            arg = i;
        }
    }
    if (v[arg] < 0.0)
        for (double& x : v) x = -x;
}

// Cyclic-by-rows Jacobi rotations (Golub & Van Loan sec. 8.5). The oracle
// for every spectral claim in the test suite, so it is deliberately the
// dumbest correct algorithm: O(N^3) per sweep, dense, no preconditioning.
inline SpectralResult jacobi_eigen(const Matrix& m) {
    const std::size_t n = m.rows;
    if (m.cols != n || n == 0) throw ValidationError("jacobi_eigen: matrix must be square and nonempty");
    if (n > 4096) throw ValidationError("jacobi_eigen: N <= 4096 only");
    if (max_asymmetry(m) > 1e-10) throw ValidationError("jacobi_eigen: input asymmetric beyond 1e-10");

    const double scale = frobenius_norm(m);
    Matrix A = m;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (A(i, j) + A(j, i));
            A(i, j) = A(j, i) = v;
        }
    Matrix V = Matrix::identity(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += A(i, j) * A(i, j);
        return std::sqrt(2.0 * s);
    };

    const double tol = (scale == 0.0) ? 0.0 : 1e-12 * scale;
    int sweeps = 0;
    while (off_norm() > tol) {
        if (++sweeps > 100) throw NumericError("jacobi_eigen: no convergence in 100 sweeps");
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (apq == 0.0) continue;
                double theta = 0.5 * (A(q, q) - A(p, p)) / apq;
                double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                double tau = s / (1.0 + c);
                double app = A(p, p), aqq = A(q, q);
                A(p, p) = app - t * apq;
                A(q, q) = aqq + t * apq;
                A(p, q) = A(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = A(p, i) = aip - s * (aiq + tau * aip);
                    A(i, q) = A(q, i) = aiq + s * (aip - tau * aiq);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = vip - s * (viq + tau * vip);
                    V(i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return A(a, a) < A(b, b); });

    SpectralResult r;
    r.eigenvalues.resize(n);
    r.vectors = Matrix(n, n);
    r.sweeps = sweeps;
    Vec col(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t src = order[j];
        r.eigenvalues[j] = A(src, src);
        for (std::size_t i = 0; i < n; ++i) col[i] = V(i, src);
        canonical_sign(col);
        for (std::size_t i = 0; i < n; ++i) r.vectors(i, j) = col[i];
    }

    // residual check against the original input, per eigenpair
    for (std::size_t j = 0; j < n; ++j) {
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mv = 0.0;
            for (std::size_t l = 0; l < n; ++l) mv += m(i, l) * r.vectors(l, j);
            double d = mv - r.eigenvalues[j] * r.vectors(i, j);
            res += d * d;
        }
        if (std::sqrt(res) > 1e-8 * std::max(scale, 1e-300))
            throw NumericError("jacobi_eigen: residual above 1e-8 * ||m|| for pair " + std::to_string(j));
    }
    return r;
}

// Full left-eigenbasis of a reversible kernel: eigenvalues of -Q ascending
// (lambda_1 = 0 < lambda_2 <= ...), eigenvectors v_k = Pi^{1/2} u_k
// normalized in the pi-inner product, canonical sign. For Q = -L this is
// the plain Laplacian eigenbasis.
struct KernelEigen {
    Vec lambda;
    Matrix vectors;  // columns
    bool degenerate_lambda2 = false;
};

inline KernelEigen kernel_eigen(const Kernel& k) {
    Matrix M = symmetrize(k);
    for (double& v : M.a) v = -v;
    SpectralResult s = jacobi_eigen(M);
    const std::size_t n = M.rows;
    KernelEigen r;
    r.lambda = std::move(s.eigenvalues);
    r.vectors = Matrix(n, n);
    Vec col(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = std::sqrt(k.pi[i]) * s.vectors(i, j);
        canonical_sign(col);
        for (std::size_t i = 0; i < n; ++i) r.vectors(i, j) = col[i];
    }
    if (n >= 3) r.degenerate_lambda2 = std::abs(r.lambda[2] - r.lambda[1]) <= 1e-9;
    return r;
}

inline Vec eigen_column(const KernelEigen& e, std::size_t j) {
    Vec v(e.vectors.rows);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = e.vectors(i, j);
    return v;
}

struct FiedlerResult {
    double lambda2 = 0.0;
    Vec v2;
    bool degenerate = false;  // |lambda2 - lambda3| <= 1e-9: v2 is one
                              // vector of an eigenspace, compare via CS only
};

inline FiedlerResult fiedler(const Kernel& k) {
    if (k.n() < 2) throw ValidationError("fiedler: need at least 2 nodes");
    KernelEigen e = kernel_eigen(k);
    return {e.lambda[1], eigen_column(e, 1), e.degenerate_lambda2};
}

// RQ(z) = <z, (-Q^T) z> / <z, z> in the kernel's inner product; reduces to
// z^T L z / ||z||^2 for Q = -L.
inline double rayleigh_quotient(const Vec& z, const Kernel& k) {
    if (static_cast<int>(z.size()) != k.n()) throw ValidationError("rayleigh_quotient: dimension mismatch");
    if (norm2(z) < 1e-14) throw ValidationError("rayleigh_quotient: degenerate input");
    const std::size_t n = z.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double qtz = 0.0;
        for (std::size_t j = 0; j < n; ++j) qtz += k.q(j, i) * z[j];
        num += z[i] * (-qtz) / k.pi[i];
        den += z[i] * z[i] / k.pi[i];
    }
    return num / den;
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
    double na = norm2(a), nb = norm2(b);
    if (na < 1e-14 || nb < 1e-14) throw ValidationError("cosine_similarity: zero vector");
    return std::abs(dot(a, b)) / (na * nb);
}

inline double cosine_similarity(const Vec& z, const Vec& v2, const Kernel& k) {
    if (!k.has_pi()) throw ValidationError("cosine_similarity: kernel has no stationary distribution");
    PiInnerProduct ip{k.pi};
    double nz = ip.norm(z), nv = ip.norm(v2);
    if (nz < 1e-14 || nv < 1e-14) throw ValidationError("cosine_similarity: zero vector");
    return std::abs(ip(z, v2)) / (nz * nv);
}

// S = {i : v_i > 0}, zeros to the complement; flipped when S is empty.
// A vector whose entries are all one sign (the constant direction) carries
// no cut information and is rejected.
inline std::pair<NodeSet, NodeSet> sign_partition(const Vec& v) {
    NodeSet pos, rest;
    for (std::size_t i = 0; i < v.size(); ++i)
        (v[i] > 0.0 ? pos : rest).push_back(static_cast<int>(i));
    if (pos.empty()) {
        pos.clear();
        rest.clear();
        for (std::size_t i = 0; i < v.size(); ++i)
            (v[i] < 0.0 ? pos : rest).push_back(static_cast<int>(i));
    }
    if (pos.empty() || rest.empty())
        throw ValidationError("sign_partition: degenerate direction carries no cut information");
    return {pos, rest};
}

// [v_bar]_i = [v_rw]_i / sqrt(d(i)): maps the random-walk Fiedler vector to
// the normalized-Laplacian one using only local degrees.
inline Vec rw_to_normalized_fiedler(const Vec& v_rw, const Graph& g) {
    if (static_cast<int>(v_rw.size()) != g.n) throw ValidationError("rw_to_normalized_fiedler: dimension mismatch");
    Vec out(v_rw.size());
    for (int i = 0; i < g.n; ++i) {
        if (!(g.deg[i] > 0.0)) throw ValidationError("rw_to_normalized_fiedler: zero-degree node " + std::to_string(i));
        out[i] = v_rw[i] / std::sqrt(g.deg[i]);
    }
    return out;
}

}  // namespace fwalk
