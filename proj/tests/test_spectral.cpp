#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "fwalk/kernel.hpp"
#include "fwalk/rng.hpp"
#include "fwalk/spectral.hpp"

using namespace fwalk;

namespace {

Vec column(const Matrix& m, int c) {
    Vec v(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) v[i] = m(i, c);
    return v;
}

Matrix random_symmetric(int n, Rng& rng, double scale = 1.0) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) m(i, j) = m(j, i) = scale * rng.gaussian();
    return m;
}

}  // namespace

TEST_CASE("jacobi solver on matrices with known spectra") {
    SECTION("3-path laplacian: 0, 1, 3") {
        SpectralResult s = jacobi_eigen(combinatorial_laplacian(path_graph(3)));
        REQUIRE(s.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(s.eigenvalues[1] == Catch::Approx(1.0).epsilon(1e-12));
        REQUIRE(s.eigenvalues[2] == Catch::Approx(3.0).epsilon(1e-12));
    }
    SECTION("4-cycle laplacian: 0, 2, 2, 4") {
        SpectralResult s = jacobi_eigen(combinatorial_laplacian(cycle_graph(4)));
        REQUIRE(s.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(s.eigenvalues[1] == Catch::Approx(2.0).epsilon(1e-12));
        REQUIRE(s.eigenvalues[2] == Catch::Approx(2.0).epsilon(1e-12));
        REQUIRE(s.eigenvalues[3] == Catch::Approx(4.0).epsilon(1e-12));
    }
    SECTION("complete graph: 0 then N repeated") {
        SpectralResult s = jacobi_eigen(combinatorial_laplacian(complete_graph(5)));
        REQUIRE(s.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
        for (int i = 1; i < 5; ++i) REQUIRE(s.eigenvalues[i] == Catch::Approx(5.0).epsilon(1e-12));
    }
    SECTION("diagonal matrix returns sorted diagonal") {
        Matrix d(3, 3);
        d(0, 0) = 5.0;
        d(1, 1) = -2.0;
        d(2, 2) = 1.0;
        SpectralResult s = jacobi_eigen(d);
        REQUIRE(s.eigenvalues[0] == Catch::Approx(-2.0));
        REQUIRE(s.eigenvalues[1] == Catch::Approx(1.0));
        REQUIRE(s.eigenvalues[2] == Catch::Approx(5.0));
    }
}

TEST_CASE("jacobi residuals and orthonormality on random symmetric matrices") {
    Rng rng(12);
    for (int rep = 0; rep < 15; ++rep) {
        int n = 2 + static_cast<int>(rng.below(9));
        Matrix m = random_symmetric(n, rng, 3.0);
        SpectralResult s = jacobi_eigen(m);
        double mnorm = frobenius_norm(m);
        for (int c = 0; c < n; ++c) {
            Vec v = column(s.vectors, c);
            Vec mv = matvec(m, v);
            for (int i = 0; i < n; ++i)
                REQUIRE(mv[i] == Catch::Approx(s.eigenvalues[c] * v[i]).margin(1e-8 * std::max(1.0, mnorm)));
        }
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b)
                REQUIRE(dot(column(s.vectors, a), column(s.vectors, b)) ==
                        Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-10));
        // eigenvalues ascending
        for (int c = 1; c < n; ++c) REQUIRE(s.eigenvalues[c] >= s.eigenvalues[c - 1]);
    }
}

TEST_CASE("canonical sign fixes the representative") {
    Vec v = {-0.3, 0.7, -0.4};
    Vec flipped = v;
    for (double& x : flipped) x = -x;
    Vec cv = v, cf = flipped;
    canonical_sign(cv);
    canonical_sign(cf);
    REQUIRE(cv == cf);
    // largest-magnitude entry ends positive
    REQUIRE(cv[1] > 0.0);
}

TEST_CASE("fiedler vector of the 3-path") {
    Kernel k = combinatorial_kernel(path_graph(3));
    FiedlerResult f = fiedler(k);
    REQUIRE(f.lambda2 == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE_FALSE(f.degenerate);
    Vec expected = {1.0 / std::sqrt(2.0), 0.0, -1.0 / std::sqrt(2.0)};
    REQUIRE(cosine_similarity(f.v2, expected) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degeneracy flag") {
    REQUIRE(fiedler(combinatorial_kernel(cycle_graph(6))).degenerate);
    REQUIRE(fiedler(combinatorial_kernel(complete_graph(4))).degenerate);
    REQUIRE_FALSE(fiedler(combinatorial_kernel(path_graph(5))).degenerate);
}

TEST_CASE("rayleigh quotient") {
    Kernel k = combinatorial_kernel(path_graph(3));
    SECTION("hand value on an eigenvector") {
        Vec z = {1.0, 0.0, -1.0};
        REQUIRE(rayleigh_quotient(z, k) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("scale invariance") {
        Rng rng(3);
        Vec z = {0.4, -1.3, 0.9};
        Vec z2 = z;
        for (double& x : z2) x *= 17.0;
        REQUIRE(rayleigh_quotient(z, k) == Catch::Approx(rayleigh_quotient(z2, k)).epsilon(1e-12));
    }
    SECTION("lower bound lambda2 on vectors orthogonal to the constant") {
        Rng rng(8);
        for (int rep = 0; rep < 50; ++rep) {
            Graph g = random_connected_gnm(6, 9, rng);
            Kernel k2 = combinatorial_kernel(g);
            FiedlerResult f = fiedler(k2);
            Vec u(6);
            double mean = 0.0;
            for (double& x : u) {
                x = rng.gaussian();
                mean += x;
            }
            mean /= 6.0;
            for (double& x : u) x -= mean;
            REQUIRE(rayleigh_quotient(u, k2) >= f.lambda2 - 1e-9);
        }
    }
    SECTION("degenerate input rejected") {
        Vec z(3, 0.0);
        REQUIRE_THROWS_AS(rayleigh_quotient(z, k), ValidationError);
    }
}

TEST_CASE("pi-weighted rayleigh quotient agrees with the dtmc spectrum") {
    Kernel k = random_walk_kernel(path_graph(3));
    KernelEigen e = kernel_eigen(k);
    for (int c = 0; c < 3; ++c) {
        Vec v(3);
        for (int i = 0; i < 3; ++i) v[i] = e.vectors(i, c);
        if (c == 0) continue;  // constant direction is excluded by RQ's input contract
        REQUIRE(rayleigh_quotient(v, k) == Catch::Approx(e.lambda[c]).margin(1e-10));
    }
}

TEST_CASE("cosine similarity") {
    Vec a = {1.0, 2.0, -1.0};
    Vec b = a;
    for (double& x : b) x = -x;
    SECTION("sign-blind") { REQUIRE(cosine_similarity(a, b) == Catch::Approx(1.0)); }
    SECTION("orthogonal directions give zero") {
        REQUIRE(cosine_similarity({1.0, 0.0}, {0.0, 2.0}) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("pi-weighted overload is sign-blind and normalized") {
        Kernel k = random_walk_kernel(path_graph(3));
        REQUIRE(cosine_similarity(a, b, k) == Catch::Approx(1.0));
    }
    SECTION("zero vector rejected") {
        REQUIRE_THROWS_AS(cosine_similarity(Vec{0.0, 0.0}, Vec{1.0, 1.0}), ValidationError);
    }
}

TEST_CASE("sign partition") {
    SECTION("positive side, zeros to the complement") {
        auto [s, sc] = sign_partition({0.5, 0.0, -0.2, 0.1});
        REQUIRE(s == NodeSet{0, 3});
        REQUIRE(sc == NodeSet{1, 2});
    }
    SECTION("negation gives the same unordered partition") {
        Vec v = {0.5, -0.1, 0.4, -0.3};
        auto [s1, sc1] = sign_partition(v);
        for (double& x : v) x = -x;
        auto [s2, sc2] = sign_partition(v);
        REQUIRE(s1 == sc2);
        REQUIRE(sc1 == s2);
    }
    SECTION("constant and zero vectors are degenerate directions") {
        REQUIRE_THROWS_AS(sign_partition(Vec{1.0, 1.0, 1.0}), ValidationError);
        REQUIRE_THROWS_AS(sign_partition(Vec{0.0, 0.0}), ValidationError);
    }
}

TEST_CASE("random-walk fiedler maps to the normalized-laplacian eigenvector") {
    Rng rng(77);
    for (int rep = 0; rep < 10; ++rep) {
        Graph g = random_connected_gnm(7, 11, rng);
        Kernel k = random_walk_kernel(g);
        FiedlerResult f = fiedler(k);
        if (f.degenerate) continue;
        Vec mapped = rw_to_normalized_fiedler(f.v2, g);
        SpectralResult ns = jacobi_eigen(normalized_laplacian(g));
        Vec nv2 = column(ns.vectors, 1);
        REQUIRE(cosine_similarity(mapped, nv2) == Catch::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("spectra of the normalized and random-walk laplacians coincide") {
    Rng rng(41);
    for (int rep = 0; rep < 10; ++rep) {
        Graph g = random_connected_gnm(8, 14, rng);
        SpectralResult ns = jacobi_eigen(normalized_laplacian(g));
        // L_rw is similar to the symmetric normalized laplacian; kernel_eigen
        // of the random-walk kernel computes exactly that route
        KernelEigen ke = kernel_eigen(random_walk_kernel(g));
        for (int i = 0; i < 8; ++i)
            REQUIRE(ns.eigenvalues[i] == Catch::Approx(ke.lambda[i]).margin(1e-10));
    }
}
