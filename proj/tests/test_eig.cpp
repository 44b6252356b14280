#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <vector>

#include "constrdyn/eig.hpp"
#include "constrdyn/rng.hpp"
#include "test_util.hpp"

using namespace constrdyn;

namespace {

double matrix_norm1(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s = std::max(s, std::abs(x));
    return s;
}

// max_k ||A v_k - lambda_k v_k||_2
double right_residual(std::span<const double> a, const EigenResult& eg) {
    const uint32_t n = eg.n;
    double worst = 0.0;
    for (uint32_t k = 0; k < n; ++k) {
        auto v = eg.right_vector(k);
        double acc = 0.0;
        for (uint32_t i = 0; i < n; ++i) {
            std::complex<double> av{0.0, 0.0};
            for (uint32_t j = 0; j < n; ++j) av += a[size_t(i) * n + j] * v[j];
            acc += std::norm(av - eg.values[k] * v[i]);
        }
        worst = std::max(worst, std::sqrt(acc));
    }
    return worst;
}

// max_k ||u_k^H A - lambda_k u_k^H||_2
double left_residual(std::span<const double> a, const EigenResult& eg) {
    const uint32_t n = eg.n;
    double worst = 0.0;
    for (uint32_t k = 0; k < n; ++k) {
        auto u = eg.left_vector(k);
        double acc = 0.0;
        for (uint32_t j = 0; j < n; ++j) {
            std::complex<double> ua{0.0, 0.0};
            for (uint32_t i = 0; i < n; ++i) ua += std::conj(u[i]) * a[size_t(i) * n + j];
            acc += std::norm(ua - eg.values[k] * std::conj(u[j]));
        }
        worst = std::max(worst, std::sqrt(acc));
    }
    return worst;
}

bool has_value(const EigenResult& eg, std::complex<double> want, double tol = 1e-10) {
    for (const auto& v : eg.values)
        if (std::abs(v - want) < tol) return true;
    return false;
}

}  // namespace

TEST_CASE("known spectra", "[eig]") {
    SECTION("diagonal") {
        const std::vector<double> a{-1.0, 0.0, 0.0, -2.0};
        EigenResult eg = eig_nonsymmetric(a, 2);
        REQUIRE(has_value(eg, {-1.0, 0.0}));
        REQUIRE(has_value(eg, {-2.0, 0.0}));
    }
    SECTION("rotation generator has eigenvalues +-i") {
        const std::vector<double> a{0.0, 1.0, -1.0, 0.0};
        EigenResult eg = eig_nonsymmetric(a, 2);
        REQUIRE(has_value(eg, {0.0, 1.0}));
        REQUIRE(has_value(eg, {0.0, -1.0}));
    }
    SECTION("characteristic polynomial lambda^2 + 4") {
        const std::vector<double> a{0.0, 4.0, -1.0, 0.0};
        EigenResult eg = eig_nonsymmetric(a, 2);
        REQUIRE(has_value(eg, {0.0, 2.0}));
        REQUIRE(has_value(eg, {0.0, -2.0}));
    }
}

TEST_CASE("conjugate pairs are adjacent", "[eig]") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const uint32_t n = 2 + uint32_t(rng.below(6));
        std::vector<double> a = testutil::random_matrix(rng, n);
        EigenResult eg = eig_nonsymmetric(a, n);
        for (uint32_t k = 0; k < n; ++k) {
            if (eg.values[k].imag() > 0.0) {
                REQUIRE(k + 1 < n);
                REQUIRE(eg.values[k + 1] == std::conj(eg.values[k]));
            }
        }
    }
}

TEST_CASE("reconstruction residuals on random matrices up to n = 16", "[eig]") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const uint32_t n = 2 + uint32_t(rng.below(15));
        std::vector<double> a = testutil::random_matrix(rng, n);
        EigenResult eg = eig_nonsymmetric(a, n);
        const double scale = matrix_norm1(a);
        INFO("trial " << trial << " n " << n);
        REQUIRE(right_residual(a, eg) <= 1e-8 * scale * n);
        REQUIRE(left_residual(a, eg) <= 1e-8 * scale * n);
    }
}

TEST_CASE("left and right vectors are biorthogonal for separated spectra", "[eig]") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a = testutil::random_matrix(rng, 4);
        EigenResult eg = eig_nonsymmetric(a, 4);
        for (uint32_t k = 0; k < 4; ++k) {
            if (eg.ill_conditioned[k]) continue;
            for (uint32_t m = 0; m < 4; ++m) {
                if (std::abs(eg.values[k] - eg.values[m]) < 1e-3) continue;
                std::complex<double> uv{0.0, 0.0};
                for (uint32_t i = 0; i < 4; ++i)
                    uv += std::conj(eg.left_vector(k)[i]) * eg.right_vector(m)[i];
                REQUIRE(std::abs(uv) < 1e-7);
            }
        }
    }
}

TEST_CASE("defective matrix is flagged ill-conditioned", "[eig]") {
    // Jordan block: left and right eigenvectors are orthogonal
    const std::vector<double> a{1.0, 1.0, 0.0, 1.0};
    EigenResult eg = eig_nonsymmetric(a, 2);
    REQUIRE((eg.ill_conditioned[0] || eg.ill_conditioned[1]));
}

TEST_CASE("input validation", "[eig]") {
    REQUIRE_THROWS_AS(eig_nonsymmetric(std::vector<double>{1.0, 2.0, 3.0}, 2), std::invalid_argument);
    const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0};
    REQUIRE_THROWS_AS(eig_nonsymmetric(bad, 2), std::invalid_argument);
    std::vector<double> big(65 * 65, 0.0);
    REQUIRE_THROWS_AS(eig_nonsymmetric(big, 65), std::invalid_argument);
}

TEST_CASE("spd detection", "[eig]") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> b = testutil::random_spd(rng, 4);
        REQUIRE(is_spd(b, 4));
        std::vector<double> neg = b;
        for (double& x : neg) x = -x;
        REQUIRE_FALSE(is_spd(neg, 4));
    }
    std::vector<double> asym{2.0, 1.0, 0.0, 2.0};
    REQUIRE_FALSE(is_spd(asym, 2));
}
