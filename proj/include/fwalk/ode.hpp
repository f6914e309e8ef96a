#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fwalk/core.hpp"
#include "fwalk/kernel.hpp"
#include "fwalk/linalg.hpp"
#include "fwalk/rng.hpp"
#include "fwalk/simulator.hpp"
#include "fwalk/spectral.hpp"

namespace fwalk {

// Drift of the coupled density pair:
//   Fx_i = (Q^T x)_i + kappa (x.y) x_i - kappa y_i x_i
//   Fy_i = (Q^T y)_i + kappa (x.y) y_i - kappa x_i y_i
inline std::pair<Vec, Vec> vector_field(const Vec& x, const Vec& y, const Kernel& k, double kappa) {
    const std::size_t N = x.size();
    if (y.size() != N || static_cast<std::size_t>(k.n()) != N)
        throw ValidationError("vector_field: size mismatch");
    Vec fx(N), fy(N);
    const double xy = dot(x, y);
    for (std::size_t i = 0; i < N; ++i) {
        double qx = 0.0, qy = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            const double q = k.q(j, i);
            qx += q * x[j];
            qy += q * y[j];
        }
        fx[i] = qx + kappa * (xy - y[i]) * x[i];
        fy[i] = qy + kappa * (xy - x[i]) * y[i];
    }
    return {fx, fy};
}

// Common kill intensity of both groups.
inline double lambda_t(const Vec& x, const Vec& y, double kappa) {
    if (x.size() != y.size()) throw ValidationError("lambda_t: size mismatch");
    return kappa * dot(x, y);
}

namespace detail {

inline void require_off_s0_direction(const Vec& z) {
    double s = sum(z);
    if (std::abs(s) > 1e-10 * std::max(1.0, norm2(z)))
        throw ValidationError("difference vector must have no component along the all-ones direction");
    if (norm2(z) == 0.0) throw ValidationError("difference vector must be nonzero");
}

}  // namespace detail

// V(u) = (1/2) <u, (-Q^T) u>_pi. Callers interested in the normalized
// trajectory functional pass u = z / ||z||_pi.
inline double lyapunov_V(const Vec& u, const Kernel& k) {
    if (!k.has_pi()) throw ValidationError("lyapunov_V: kernel carries no stationary distribution");
    detail::require_off_s0_direction(u);
    const std::size_t N = u.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double qi = 0.0;
        for (std::size_t j = 0; j < N; ++j) qi += k.q(j, i) * u[j];
        acc += u[i] * qi / k.pi[i];
    }
    return -0.5 * acc;
}

// dV/dt of the normalized difference: with c_k = <z, v_k>_pi and
// p_k = c_k^2 / sum(c^2),  returns (sum lambda_k p_k)^2 - sum lambda_k^2 p_k,
// the negative variance of the spectral weight distribution.
inline double dV_dt_analytic(const Vec& z, const KernelEigen& eig, const Kernel& k) {
    detail::require_off_s0_direction(z);
    const std::size_t N = z.size();
    double csum = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t kk = 0; kk < N; ++kk) {
        double c = 0.0;
        for (std::size_t i = 0; i < N; ++i) c += z[i] * eig.vectors(i, kk) / k.pi[i];
        const double c2 = c * c;
        csum += c2;
        m1 += eig.lambda[kk] * c2;
        m2 += eig.lambda[kk] * eig.lambda[kk] * c2;
    }
    if (csum == 0.0) throw ValidationError("dV_dt_analytic: zero vector");
    m1 /= csum;
    m2 /= csum;
    return m1 * m1 - m2;
}

inline double dV_dt_analytic(const Vec& z, const Kernel& k) {
    return dV_dt_analytic(z, kernel_eigen(k), k);
}

// Exact Jacobian of vector_field at (x, y), blocks
//   d Fx / d x = Q^T + kappa [ x y^T + (x.y) I - D_y ]
//   d Fx / d y = kappa [ x x^T - D_x ]
//   d Fy / d x = kappa [ y y^T - D_y ]
//   d Fy / d y = Q^T + kappa [ y x^T + (x.y) I - D_x ]
// (matches central finite differences of vector_field).
inline Matrix jacobian(const Vec& x, const Vec& y, const Kernel& k, double kappa) {
    const std::size_t N = x.size();
    if (y.size() != N || static_cast<std::size_t>(k.n()) != N)
        throw ValidationError("jacobian: size mismatch");
    const double xy = dot(x, y);
    Matrix J(2 * N, 2 * N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t l = 0; l < N; ++l) {
            const double qt = k.q(l, i);
            J(i, l) = qt + kappa * (x[i] * y[l] + (i == l ? xy - y[i] : 0.0));
            J(i, N + l) = kappa * (x[i] * x[l] - (i == l ? x[i] : 0.0));
            J(N + i, l) = kappa * (y[i] * y[l] - (i == l ? y[i] : 0.0));
            J(N + i, N + l) = qt + kappa * (y[i] * x[l] + (i == l ? xy - x[i] : 0.0));
        }
    }
    return J;
}

struct InstabilityReport {
    int count_positive = 0;        // eigenvalues of sym(J) above 1e-9
    double threshold_bound = 0.0;  // -lambda_N + kappa min_i x_i^2
    double second_from_top_symmetrized = 0.0;  // (N-1)-th largest eig of sym(J)
    int count_positive_power = 0;  // positive real parts by deflated power iteration on J
    double largest_real_estimate = 0.0;
    double max_asymmetry = 0.0;  // of J itself; 0 means the oracle count is exact
};

namespace detail {

// Dominant eigenpairs of the shifted matrix A = J + s I by power iteration
// with projected deflation. Exact for symmetric J; an estimate otherwise
// (the report carries J's asymmetry so callers can tell).
inline std::pair<int, double> count_positive_real_parts(const Matrix& J) {
    const std::size_t m = J.rows;
    double shift = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        for (std::size_t jj = 0; jj < m; ++jj) row += std::abs(J(i, jj));
        shift = std::max(shift, row);
    }
    shift *= 2.0;
    const double scale = shift;
    std::vector<Vec> basis;
    Rng rng(0x9d2c5680u);
    int count = 0;
    double largest = -std::numeric_limits<double>::infinity();
    Vec v(m), w(m);
    for (std::size_t round = 0; round < m; ++round) {
        for (auto& e : v) e = rng.gaussian();
        for (int it = 0; it < 400; ++it) {
            for (const Vec& b : basis) {
                double c = dot(v, b);
                for (std::size_t i = 0; i < m; ++i) v[i] -= c * b[i];
            }
            double nv = norm2(v);
            if (nv < 1e-30) break;
            for (auto& e : v) e /= nv;
            for (std::size_t i = 0; i < m; ++i) {
                double acc = shift * v[i];
                for (std::size_t jj = 0; jj < m; ++jj) acc += J(i, jj) * v[jj];
                w[i] = acc;
            }
            std::swap(v, w);
        }
        double nv = norm2(v);
        if (nv < 1e-30) break;
        for (auto& e : v) e /= nv;
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t jj = 0; jj < m; ++jj) acc += J(i, jj) * v[jj];
            mu += v[i] * acc;
        }
        if (round == 0) largest = mu;
        if (mu <= 1e-9 * scale) break;
        ++count;
        basis.push_back(v);
    }
    return {count, largest};
}

}  // namespace detail

// Spectrum diagnostics of the linearization on the coincidence set,
// evaluated at (x, x). The oracle count uses the symmetrized Jacobian
// (exact whenever J itself is symmetric, e.g. combinatorial kernels);
// the power-iteration count tracks real parts of J directly.
inline InstabilityReport s0_instability_check(const Vec& x, const Kernel& k, double kappa) {
    for (double e : x)
        if (!(e > 0.0)) throw ValidationError("s0_instability_check: x must be strictly positive");
    Matrix J = jacobian(x, x, k, kappa);
    InstabilityReport rep;
    rep.max_asymmetry = max_asymmetry(J);
    Matrix S(J.rows, J.cols);
    for (std::size_t i = 0; i < J.rows; ++i)
        for (std::size_t jj = 0; jj < J.cols; ++jj) S(i, jj) = 0.5 * (J(i, jj) + J(jj, i));
    SpectralResult es = jacobi_eigen(S);
    for (double lam : es.eigenvalues)
        if (lam > 1e-9) ++rep.count_positive;
    const std::size_t N = x.size();
    // (N-1)-th largest of the 2N ascending eigenvalues
    rep.second_from_top_symmetrized = es.eigenvalues[es.eigenvalues.size() - (N - 1)];

    KernelEigen ke = kernel_eigen(k);
    double min_x2 = x[0] * x[0];
    for (double e : x) min_x2 = std::min(min_x2, e * e);
    rep.threshold_bound = -ke.lambda.back() + kappa * min_x2;

    auto [cnt, largest] = detail::count_positive_real_parts(J);
    rep.count_positive_power = cnt;
    rep.largest_real_estimate = largest;
    return rep;
}

// h(x) = (1+x) log(1+x) - x, the exponent shape of the Poisson tail bound.
inline double bound_h(double x) {
    if (x < 0.0) throw ValidationError("bound_h: argument must be nonnegative");
    if (x == 0.0) return 0.0;
    return (1.0 + x) * std::log1p(x) - x;
}

struct DeviationBoundInputs {
    int n = 0;          // walkers per group
    int N = 0;          // nodes
    double kappa = 0.0;
    double T = 0.0;
    double eps = 0.0;
    double M = 0.0;     // Lipschitz constant of the drift
};

struct DeviationBoundResult {
    double raw = 0.0;
    double probability = 0.0;  // raw clamped to [0, 1]
};

// P( sup_{t <= T} ||(x^n, y^n) - (x, y)|| >= eps )
//   <= 4 N (N-1) exp( -n (1+kappa) T h( eps e^{-MT} / (sqrt(2) N (N-1) (1+kappa) T) ) )
inline DeviationBoundResult deviation_bound(const DeviationBoundInputs& in) {
    if (in.n <= 0 || in.N <= 1 || !(in.kappa > 0.0) || !(in.T > 0.0) || in.eps < 0.0 || in.M < 0.0)
        throw ValidationError("deviation_bound: all inputs must be positive (N >= 2, eps/M >= 0)");
    const double NN = static_cast<double>(in.N) * (in.N - 1);
    const double rate_mass = static_cast<double>(in.n) * (1.0 + in.kappa) * in.T;
    const double arg = in.eps * std::exp(-in.M * in.T) / (std::sqrt(2.0) * NN * (1.0 + in.kappa) * in.T);
    DeviationBoundResult r;
    r.raw = 4.0 * NN * std::exp(-rate_mass * bound_h(arg));
    r.probability = std::min(1.0, r.raw);
    return r;
}

// Dirichlet(1,...,1) draw: normalized exponentials.
inline Vec random_simplex(std::size_t N, Rng& rng) {
    Vec v(N);
    double s = 0.0;
    for (auto& e : v) {
        e = rng.exponential(1.0);
        s += e;
    }
    for (auto& e : v) e /= s;
    return v;
}

struct LipschitzEstimate {
    double value = 0.0;
    int samples = 0;
};

namespace detail {

// Spectral norm by power iteration on J^T J.
inline double spectral_norm(const Matrix& J, Rng& rng) {
    const std::size_t m = J.cols;
    Vec v(m), Jv(J.rows), JtJv(m);
    for (auto& e : v) e = rng.gaussian();
    double sigma = 0.0;
    for (int it = 0; it < 300; ++it) {
        double nv = norm2(v);
        if (nv < 1e-300) return 0.0;
        for (auto& e : v) e /= nv;
        for (std::size_t i = 0; i < J.rows; ++i) {
            double acc = 0.0;
            for (std::size_t jj = 0; jj < m; ++jj) acc += J(i, jj) * v[jj];
            Jv[i] = acc;
        }
        for (std::size_t jj = 0; jj < m; ++jj) {
            double acc = 0.0;
            for (std::size_t i = 0; i < J.rows; ++i) acc += J(i, jj) * Jv[i];
            JtJv[jj] = acc;
        }
        double next = norm2(Jv);
        if (it > 20 && std::abs(next - sigma) <= 1e-12 * std::max(1.0, next)) {
            sigma = next;
            break;
        }
        sigma = next;
        v = JtJv;
    }
    return sigma;
}

}  // namespace detail

// Running max over sampled simplex pairs of ||jacobian(x, y)||_2. A lower
// estimate of the true Lipschitz constant; deterministic for a fixed seed.
inline LipschitzEstimate estimate_lipschitz_M(const Kernel& k, double kappa, int samples,
                                              std::uint64_t seed = 0x4c495053u) {
    if (samples < 1) throw ValidationError("estimate_lipschitz_M: samples >= 1 required");
    Rng rng(seed);
    const std::size_t N = static_cast<std::size_t>(k.n());
    LipschitzEstimate est;
    est.samples = samples;
    for (int s = 0; s < samples; ++s) {
        Vec x = random_simplex(N, rng);
        Vec y = random_simplex(N, rng);
        Matrix J = jacobian(x, y, k, kappa);
        est.value = std::max(est.value, detail::spectral_norm(J, rng));
    }
    return est;
}

// Embed a difference direction into a density pair: x = u + z/2, y = u - z/2
// with u uniform and z rescaled so both stay nonnegative (safety < 1 keeps
// them strictly positive). z must be orthogonal to the all-ones direction.
inline std::pair<Vec, Vec> embed_direction(const Vec& z, double safety = 0.5) {
    detail::require_off_s0_direction(z);
    if (!(safety > 0.0) || safety >= 1.0)
        throw ValidationError("embed_direction: safety must lie in (0, 1)");
    const std::size_t N = z.size();
    const double u = 1.0 / static_cast<double>(N);
    const double zmax = norm_inf(z);
    const double s = safety * 2.0 * u / zmax;
    Vec x(N), y(N);
    for (std::size_t i = 0; i < N; ++i) {
        x[i] = u + 0.5 * s * z[i];
        y[i] = u - 0.5 * s * z[i];
    }
    return {x, y};
}

struct OdeOptions {
    double dt_max = std::numeric_limits<double>::infinity();
    bool track_lyapunov = true;   // requires a reversible kernel; auto-off otherwise
    int max_snapshots = 4096;     // decimation target for the stored path
    int lyapunov_candidates = 512;
    // ||F||_inf threshold below which the state counts as numerically fixed;
    // NaN selects 4e-15 * (2 max_exit + 2 kappa), the roundoff plateau of the
    // drift evaluation with an order of magnitude to spare. 0 disables
    // freezing. The skip is sound only for states parked at an attracting
    // fixed point, so it additionally requires 8 consecutive sub-threshold
    // evaluations; transient dips near a saddle grow exponentially and
    // cannot persist that long.
    double freeze_grad_tol = std::numeric_limits<double>::quiet_NaN();
};

struct LyapunovSample {
    double t = 0.0;
    double v = 0.0;
    double dv_analytic = 0.0;
    double dv_fd = 0.0;  // central difference of the per-step V sequence
};

struct OdeResult {
    double dt = 0.0;        // actual step used
    double horizon = 0.0;
    std::vector<double> ts;  // snapshot times, ts.front() = 0, ts.back() = t_end
    std::vector<Vec> xs, ys;
    Vec x, y;  // final state
    double t_end = 0.0;
    std::size_t steps = 0;
    double max_mass_drift = 0.0;       // max |1 - sum| before renormalization
    double max_v_step_increase = 0.0;  // most positive per-step V increment
    std::vector<LyapunovSample> lyapunov;
    double frozen_at = std::numeric_limits<double>::quiet_NaN();
    double final_grad_inf = 0.0;

    bool frozen() const { return !std::isnan(frozen_at); }

    // Piecewise-linear state between stored snapshots.
    std::pair<Vec, Vec> at(double t) const {
        if (ts.empty()) throw ValidationError("OdeResult::at: empty trajectory");
        if (t < ts.front() - 1e-12 || t > ts.back() + 1e-12)
            throw ValidationError("OdeResult::at: time outside the integrated range");
        t = std::clamp(t, ts.front(), ts.back());
        auto it = std::lower_bound(ts.begin(), ts.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - ts.begin());
        if (hi == 0) return {xs[0], ys[0]};
        if (hi >= ts.size()) return {xs.back(), ys.back()};
        std::size_t lo = hi - 1;
        double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
        const std::size_t N = xs[lo].size();
        Vec x(N), y(N);
        for (std::size_t i = 0; i < N; ++i) {
            x[i] = (1.0 - w) * xs[lo][i] + w * xs[hi][i];
            y[i] = (1.0 - w) * ys[lo][i] + w * ys[hi][i];
        }
        return {x, y};
    }

    Vec z_at(double t) const {
        auto [x, y] = at(t);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
        return x;
    }
};

// Fixed-step RK4 for the coupled flow. Step: dt = min(dt_max,
// 0.1 / (2 max_j(-Q_jj) + 2 kappa)), shrunk to land on T exactly. Each
// step renormalizes both masses (drift recorded first) and tracks the
// Lyapunov value of the normalized difference. Once ||F||_inf falls below
// freeze_grad_tol the update is below one ulp of the state, so the
// remaining span is skipped as an exact no-op.
inline OdeResult integrate(const Vec& x0, const Vec& y0, const Kernel& k, double kappa, double T,
                           const OdeOptions& opts = {}) {
    const std::size_t N = x0.size();
    if (y0.size() != N || static_cast<std::size_t>(k.n()) != N)
        throw ValidationError("integrate: size mismatch");
    if (!(kappa > 0.0)) throw ValidationError("integrate: kappa > 0 required");
    if (!(T > 0.0)) throw ValidationError("integrate: T > 0 required");
    for (std::size_t i = 0; i < N; ++i)
        if (x0[i] < 0.0 || y0[i] < 0.0)
            throw ValidationError("integrate: initial densities must be nonnegative");
    if (std::abs(sum(x0) - 1.0) > 1e-12 || std::abs(sum(y0) - 1.0) > 1e-12)
        throw ValidationError("integrate: initial densities must sum to 1");

    double max_exit = 0.0;
    for (std::size_t j = 0; j < N; ++j) max_exit = std::max(max_exit, k.exit_rate(j));
    double dt_cap = std::min(opts.dt_max, 0.1 / (2.0 * max_exit + 2.0 * kappa));
    std::size_t n_steps = static_cast<std::size_t>(std::ceil(T / dt_cap));
    if (n_steps == 0) n_steps = 1;
    const double dt = T / static_cast<double>(n_steps);

    double freeze_tol = opts.freeze_grad_tol;
    if (std::isnan(freeze_tol)) freeze_tol = 4e-15 * (2.0 * max_exit + 2.0 * kappa);

    const bool track = opts.track_lyapunov && k.reversible && k.has_pi();
    KernelEigen eig;
    Vec inv_pi(N, 1.0);
    if (track) {
        eig = kernel_eigen(k);
        for (std::size_t i = 0; i < N; ++i) inv_pi[i] = 1.0 / k.pi[i];
    }

    // Hot buffers are zero-padded to a lane multiple; padded entries stay
    // exactly zero through every operation below. Rate rows are stored as
    // qrows[j*Np + i] = q(j, i), so sweeping j and accumulating row-scaled
    // updates yields Q^T a and Q^T b as pure element-wise FMA streams (no
    // float reductions, so the compiler may vectorize without changing
    // results).
    const std::size_t Np = (N + 7) & ~std::size_t(7);
    Vec qrows(N * Np, 0.0);
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t i = 0; i < N; ++i) qrows[j * Np + i] = k.q(j, i);

    OdeResult out;
    out.dt = dt;
    out.horizon = T;

    Vec x(Np, 0.0), y(Np, 0.0);
    std::copy(x0.begin(), x0.end(), x.begin());
    std::copy(y0.begin(), y0.end(), y.begin());
    Vec sx(Np, 0.0), sy(Np, 0.0);
    Vec k1x(Np, 0.0), k1y(Np, 0.0), k2x(Np, 0.0), k2y(Np, 0.0);
    Vec k3x(Np, 0.0), k3y(Np, 0.0), k4x(Np, 0.0), k4y(Np, 0.0);
    Vec qtz(Np, 0.0);

    auto eval = [&](const Vec& a, const Vec& b, Vec& fa, Vec& fb, bool want_qtz) {
        double ab = 0.0;
        for (std::size_t i = 0; i < N; ++i) ab += a[i] * b[i];
        std::fill(fa.begin(), fa.end(), 0.0);
        std::fill(fb.begin(), fb.end(), 0.0);
        double* __restrict__ pfa = fa.data();
        double* __restrict__ pfb = fb.data();
        for (std::size_t j = 0; j < N; ++j) {
            const double aj = a[j], bj = b[j];
            const double* __restrict__ row = &qrows[j * Np];
            for (std::size_t i = 0; i < Np; ++i) {
                pfa[i] += row[i] * aj;
                pfb[i] += row[i] * bj;
            }
        }
        if (want_qtz)
            for (std::size_t i = 0; i < Np; ++i) qtz[i] = pfa[i] - pfb[i];
        const double* __restrict__ pa = a.data();
        const double* __restrict__ pb = b.data();
        for (std::size_t i = 0; i < Np; ++i) {
            pfa[i] += kappa * (ab - pb[i]) * pa[i];
            pfb[i] += kappa * (ab - pa[i]) * pb[i];
        }
    };

    // V(z~) = -(1/2) <z, Q^T z>_pi / <z, z>_pi using qtz from stage 1.
    auto v_from_qtz = [&]() {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double z = x[i] - y[i];
            num += z * qtz[i] * inv_pi[i];
            den += z * z * inv_pi[i];
        }
        return -0.5 * num / den;
    };

    auto check_off_s0 = [&](double t) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double d = x[i] - y[i];
            s += d * d;
        }
        if (std::sqrt(s) < 1e-13)
            throw NumericError("integrate: trajectory entered the coincidence set x = y near t = " +
                               std::to_string(t) + "; the difference dynamics are degenerate there");
    };
    check_off_s0(0.0);

    const std::size_t snap_stride =
        std::max<std::size_t>(1, (n_steps + static_cast<std::size_t>(opts.max_snapshots) - 1) /
                                     static_cast<std::size_t>(opts.max_snapshots));
    const std::size_t lyap_stride =
        std::max<std::size_t>(1, n_steps / static_cast<std::size_t>(std::max(1, opts.lyapunov_candidates)));

    std::vector<double> v_seq;  // v_seq[m] = V(z~(m dt))
    if (track) v_seq.reserve(n_steps + 1);
    struct PendingLyap {
        std::size_t step;
        double t, v, dv_analytic;
    };
    std::vector<PendingLyap> pending;

    auto snapshot = [&](double t) {
        out.ts.push_back(t);
        out.xs.emplace_back(x.begin(), x.begin() + N);
        out.ys.emplace_back(y.begin(), y.begin() + N);
    };
    snapshot(0.0);

    double v_prev = 0.0;
    std::size_t step = 0;
    bool froze = false;
    int calm_steps = 0;
    for (; step <= n_steps; ++step) {
        const double t = static_cast<double>(step) * dt;
        eval(x, y, k1x, k1y, track);
        double grad = 0.0;
        for (std::size_t i = 0; i < Np; ++i)
            grad = std::max(grad, std::max(std::abs(k1x[i]), std::abs(k1y[i])));

        if (track) {
            const double v_now = v_from_qtz();
            if (step > 0)
                out.max_v_step_increase = std::max(out.max_v_step_increase, v_now - v_prev);
            v_prev = v_now;
            v_seq.push_back(v_now);
            if (step >= 1 && step % lyap_stride == 0 && step + 1 <= n_steps) {
                Vec z(N);
                for (std::size_t i = 0; i < N; ++i) z[i] = x[i] - y[i];
                pending.push_back({step, t, v_now, dV_dt_analytic(z, eig, k)});
            }
        }

        if (step == n_steps) {
            out.final_grad_inf = grad;
            break;
        }
        calm_steps = (grad <= freeze_tol) ? calm_steps + 1 : 0;
        if (calm_steps >= 8) {
            // the state has sat at the drift's roundoff plateau for several
            // steps: further updates change nothing measurable, so the
            // remaining span is treated as constant
            out.frozen_at = t;
            out.final_grad_inf = grad;
            froze = true;
            if (out.ts.back() != t) snapshot(t);
            break;
        }

        const double half = 0.5 * dt;
        for (std::size_t i = 0; i < Np; ++i) {
            sx[i] = x[i] + half * k1x[i];
            sy[i] = y[i] + half * k1y[i];
        }
        eval(sx, sy, k2x, k2y, false);
        for (std::size_t i = 0; i < Np; ++i) {
            sx[i] = x[i] + half * k2x[i];
            sy[i] = y[i] + half * k2y[i];
        }
        eval(sx, sy, k3x, k3y, false);
        for (std::size_t i = 0; i < Np; ++i) {
            sx[i] = x[i] + dt * k3x[i];
            sy[i] = y[i] + dt * k3y[i];
        }
        eval(sx, sy, k4x, k4y, false);
        const double w = dt / 6.0;
        double sx_mass = 0.0, sy_mass = 0.0;
        for (std::size_t i = 0; i < Np; ++i) {
            x[i] += w * (k1x[i] + 2.0 * (k2x[i] + k3x[i]) + k4x[i]);
            y[i] += w * (k1y[i] + 2.0 * (k2y[i] + k3y[i]) + k4y[i]);
        }
        for (std::size_t i = 0; i < N; ++i) {
            sx_mass += x[i];
            sy_mass += y[i];
        }
        out.max_mass_drift =
            std::max({out.max_mass_drift, std::abs(sx_mass - 1.0), std::abs(sy_mass - 1.0)});
        const double inv_sx = 1.0 / sx_mass, inv_sy = 1.0 / sy_mass;
        for (std::size_t i = 0; i < Np; ++i) {
            x[i] *= inv_sx;
            y[i] *= inv_sy;
        }
        const double t_next = static_cast<double>(step + 1) * dt;
        check_off_s0(t_next);
        if ((step + 1) % snap_stride == 0 && step + 1 < n_steps) snapshot(t_next);
    }

    out.t_end = T;
    out.steps = froze ? step : n_steps;
    if (out.ts.back() != T) snapshot(T);
    out.x.assign(x.begin(), x.begin() + N);
    out.y.assign(y.begin(), y.begin() + N);

    for (const PendingLyap& p : pending) {
        if (p.step + 1 >= v_seq.size()) continue;  // truncated by the freeze
        LyapunovSample s;
        s.t = p.t;
        s.v = p.v;
        s.dv_analytic = p.dv_analytic;
        s.dv_fd = (v_seq[p.step + 1] - v_seq[p.step - 1]) / (2.0 * dt);
        out.lyapunov.push_back(s);
    }
    return out;
}

// Largest Euclidean distance between the jump path (piecewise-constant
// instantaneous densities) and the flow (linear between stored steps) over
// the grid. Both coordinates count: the distance is of the stacked (x, y).
inline double sup_deviation(const Trajectory& sim, const OdeResult& ode,
                            const std::vector<double>& grid) {
    if (grid.empty()) throw ValidationError("sup_deviation: empty grid");
    for (double t : grid)
        if (t < 0.0 || t > sim.t_end + 1e-12 || t > ode.t_end + 1e-12)
            throw ValidationError("sup_deviation: grid time outside both horizons");

    // initial conditions must agree (the bound's coupling assumption)
    {
        const Vec& x0 = ode.xs.front();
        const Vec& y0 = ode.ys.front();
        for (std::size_t i = 0; i < x0.size(); ++i) {
            if (std::abs(static_cast<double>(sim.X0[i]) / sim.n - x0[i]) > 1e-9 ||
                std::abs(static_cast<double>(sim.Y0[i]) / sim.n - y0[i]) > 1e-9)
                throw ValidationError("sup_deviation: paths start from different states");
        }
    }

    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());

    // instantaneous sim state at each grid time from one replay pass
    std::vector<Vec> simx(sorted.size()), simy(sorted.size());
    if (sim.events_recorded) {
        std::size_t pos = 0;
        detail::replay_segments(sim, [&](double a, double b, const std::vector<int>& X,
                                         const std::vector<int>& Y) {
            while (pos < sorted.size() && sorted[pos] >= a &&
                   (sorted[pos] < b || (b >= sim.t_end && sorted[pos] <= b + 1e-12))) {
                Vec vx(X.size()), vy(Y.size());
                for (std::size_t i = 0; i < X.size(); ++i) {
                    vx[i] = static_cast<double>(X[i]) / sim.n;
                    vy[i] = static_cast<double>(Y[i]) / sim.n;
                }
                simx[pos] = std::move(vx);
                simy[pos] = std::move(vy);
                ++pos;
            }
        });
        if (pos != sorted.size())
            throw NumericError("sup_deviation: replay failed to cover the grid");
    } else {
        for (std::size_t g = 0; g < sorted.size(); ++g) {
            bool found = false;
            for (const SimSnapshot& s : sim.snapshots) {
                if (s.t == sorted[g]) {
                    simx[g] = s.x_inst;
                    simy[g] = s.y_inst;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw ValidationError(
                    "sup_deviation: grid time has no snapshot and events were not recorded");
        }
    }

    double sup = 0.0;
    for (std::size_t g = 0; g < sorted.size(); ++g) {
        auto [ox, oy] = ode.at(sorted[g]);
        double s = 0.0;
        for (std::size_t i = 0; i < ox.size(); ++i) {
            double dx = simx[g][i] - ox[i];
            double dy = simy[g][i] - oy[i];
            s += dx * dx + dy * dy;
        }
        sup = std::max(sup, std::sqrt(s));
    }
    return sup;
}

}  // namespace fwalk
