#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "fwalk/core.hpp"

namespace fwalk {

// Dense row-major matrix. Everything here is desk-scale (N <= 4096 for the
// spectral oracle, N <= a few hundred elsewhere), so no blocking or sparsity.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    const double* row(std::size_t i) const { return a.data() + i * cols; }
    double* row(std::size_t i) { return a.data() + i * cols; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline Vec matvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.cols) throw ValidationError("matvec: dimension mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.a) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.a) s = std::max(s, std::abs(v));
    return s;
}

inline double max_asymmetry(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            s = std::max(s, std::abs(m(i, j) - m(j, i)));
    return s;
}

// Solve A x = b by Gaussian elimination with partial pivoting. A is consumed.
// Throws NumericError when a pivot falls below tol (rank deficiency).
inline Vec solve_linear(Matrix A, Vec b, double tol = 1e-12) {
    const std::size_t n = A.rows;
    if (A.cols != n || b.size() != n) throw ValidationError("solve_linear: dimension mismatch");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(A(i, k)) > std::abs(A(p, k))) p = i;
        if (std::abs(A(p, k)) < tol) throw NumericError("solve_linear: singular matrix");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(A(k, j), A(p, j));
            std::swap(b[k], b[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            double f = A(i, k) / A(k, k);
            if (f == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) A(i, j) -= f * A(k, j);
            b[i] -= f * b[k];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
        x[i] = s / A(i, i);
    }
    return x;
}

}  // namespace fwalk
