#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fwalk {

using Vec = std::vector<double>;

// Bad inputs (files, configs, dimension mismatches, domain violations).
// The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric contract failed (eigensolver residual, drifted invariant, ...).
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse failure; carries the 1-based input line number.
struct ParseError : ValidationError {
    long line;
    ParseError(long line_, const std::string& msg)
        : ValidationError("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double sum(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s;
}

// a += c*b
inline void axpy(double c, const Vec& b, Vec& a) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += c * b[i];
}

inline void scale(Vec& a, double c) {
    for (double& v : a) v *= c;
}

}  // namespace fwalk
