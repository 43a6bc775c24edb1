#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "hspe/field.hpp"
#include "hspe/initial_data.hpp"
#include "hspe/norms.hpp"
#include "hspe/regularize.hpp"

#include "oracle_helpers.hpp"

using namespace hspe;

namespace {

bool bitwise_equal(const SpectralField& a, const SpectralField& b) {
    return a.coeffs() == b.coeffs();
}

// Independent copy of the anisotropic multiplier sum_{a+b<=s} k1^{2a} k2^{2b}.
double multiplier_sum(int s, double k1, double k2) {
    double acc = 0.0;
    for (int a = 0; a <= s; ++a)
        for (int b = 0; a + b <= s; ++b)
            acc += std::pow(k1 * k1, a) * std::pow(k2 * k2, b);
    return acc;
}

}  // namespace

TEST_CASE("cutoff plateaus are exact", "[regularize]") {
    for (CutoffFamily fam : {CutoffFamily::QuinticPolynomial, CutoffFamily::SmoothExponential}) {
        for (double radius : {2.0, 0.7}) {
            const CutoffSpec spec{radius, fam};
            CHECK(theta(spec, 0.0) == 1.0);
            CHECK(theta(spec, 0.25 * radius) == 1.0);
            CHECK(theta(spec, 0.5 * radius) == 1.0);
            CHECK(theta(spec, radius) == 0.0);
            CHECK(theta(spec, 2.0 * radius) == 0.0);
            for (double frac : {0.55, 0.7, 0.9}) {
                const double v = theta(spec, frac * radius);
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        }
    }
}

TEST_CASE("cutoffs are symmetric about the ramp midpoint", "[regularize]") {
    const CutoffSpec exp_spec{2.0, CutoffFamily::SmoothExponential};
    CHECK(theta(exp_spec, 1.5) == Catch::Approx(0.5).margin(1e-15));
    const CutoffSpec quintic{2.0, CutoffFamily::QuinticPolynomial};
    CHECK(theta(quintic, 1.5) == Catch::Approx(0.5).margin(1e-15));
    // theta(mid + u) + theta(mid - u) = 1 on the ramp for both families.
    for (CutoffFamily fam : {CutoffFamily::QuinticPolynomial, CutoffFamily::SmoothExponential}) {
        const CutoffSpec spec{2.0, fam};
        for (double u : {0.1, 0.25, 0.4}) {
            CHECK(theta(spec, 1.5 + u) + theta(spec, 1.5 - u) == Catch::Approx(1.0).margin(1e-14));
        }
    }
}

TEST_CASE("cutoffs decrease monotonically within [0, 1]", "[regularize]") {
    for (CutoffFamily fam : {CutoffFamily::QuinticPolynomial, CutoffFamily::SmoothExponential}) {
        for (double radius : {2.0, 0.7}) {
            const CutoffSpec spec{radius, fam};
            double prev = 1.0;
            for (int i = 0; i <= 4000; ++i) {
                const double x = 1.2 * radius * i / 4000.0;
                const double v = theta(spec, x);
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
                REQUIRE(v <= prev + 1e-15);
                prev = v;
            }
        }
    }
}

TEST_CASE("measured slope stays within the stated Lipschitz bound", "[regularize]") {
    for (CutoffFamily fam : {CutoffFamily::QuinticPolynomial, CutoffFamily::SmoothExponential}) {
        for (double radius : {2.0, 0.7}) {
            const CutoffSpec spec{radius, fam};
            const double bound = theta_lipschitz_bound(spec);
            double max_slope = 0.0;
            const double h = 1e-5 * radius;
            for (int i = 0; i <= 20000; ++i) {
                const double x = 1.1 * radius * i / 20000.0;
                max_slope = std::max(max_slope, std::abs(theta(spec, x + h) - theta(spec, x)) / h);
            }
            CHECK(max_slope <= bound * (1.0 + 1e-3));
            CHECK(max_slope >= 0.5 * bound);  // the bound is not wildly loose
        }
    }
    // The quintic ramp attains 15/8 / (radius/2) at its midpoint.
    const CutoffSpec q{2.0, CutoffFamily::QuinticPolynomial};
    const double h = 1e-6;
    const double mid_slope = std::abs(theta(q, 1.5 + h) - theta(q, 1.5 - h)) / (2.0 * h);
    CHECK(mid_slope == Catch::Approx(theta_lipschitz_bound(q)).epsilon(1e-6));
}

TEST_CASE("cutoff argument and spec validation", "[regularize]") {
    const CutoffSpec spec{2.0, CutoffFamily::QuinticPolynomial};
    CHECK_THROWS_AS(theta(spec, -0.1), ValidationError);
    CHECK_THROWS_AS(theta(CutoffSpec{0.0, CutoffFamily::QuinticPolynomial}, 1.0), ValidationError);
    CHECK_THROWS_AS(theta(CutoffSpec{-1.0, CutoffFamily::SmoothExponential}, 1.0), ValidationError);
    CHECK(cutoff_family_from_string(to_string(CutoffFamily::QuinticPolynomial)) ==
          CutoffFamily::QuinticPolynomial);
    CHECK(cutoff_family_from_string(to_string(CutoffFamily::SmoothExponential)) ==
          CutoffFamily::SmoothExponential);
    CHECK_THROWS_AS(cutoff_family_from_string("heaviside"), ValidationError);
}

TEST_CASE("projections nest, contract, and keep only kept modes", "[regularize]") {
    const GridShape g{64, 64};
    const SpectralField f = random_field(g, Parity::Even, 10, 1.0, 99u);

    const SpectralField a = spectral_projection(spectral_projection(f, 8.0 * std::numbers::pi), 4.0 * std::numbers::pi);
    const SpectralField b = spectral_projection(spectral_projection(f, 4.0 * std::numbers::pi), 8.0 * std::numbers::pi);
    const SpectralField c = spectral_projection(f, 4.0 * std::numbers::pi);
    CHECK(bitwise_equal(a, c));
    CHECK(bitwise_equal(b, c));

    CHECK(l2_norm(c) <= l2_norm(f));
    CHECK(l2_norm(spectral_projection(f, 1.0)) <= l2_norm(c));

    // Huge radius keeps everything, bitwise.
    CHECK(bitwise_equal(spectral_projection(f, 1e9), f));

    // Radius 0 keeps only the mean mode.
    const SpectralField mean_only = spectral_projection(f, 0.0);
    mean_only.for_each_mode([&](int m1, int m2, size_t idx) {
        if (m1 != 0 || m2 != 0) REQUIRE(mean_only.coeffs()[idx] == cd{0.0, 0.0});
    });
    CHECK(mean_only.coeff(0, 0) == f.coeff(0, 0));

    // Kept band: |2 pi m| <= n exactly; mode (2,0) sits on the boundary of n = 4 pi.
    const SpectralField edge = spectral_projection(f, 4.0 * std::numbers::pi);
    CHECK(edge.coeff(2, 0) == f.coeff(2, 0));
    CHECK(edge.coeff(2, 1) == cd{0.0, 0.0});  // |m| = sqrt(5) > 2
}

TEST_CASE("tail and inverse inequalities hold with the stated constant", "[regularize]") {
    const GridShape g{64, 64};
    const SpectralField f = random_field(g, Parity::Even, 10, 1.0, 2024u);
    for (double n : {2.0 * std::numbers::pi, 4.0 * std::numbers::pi, 8.0 * std::numbers::pi}) {
        for (int m = 0; m <= 2; ++m) {
            const PoincareReport rep = poincare_check(f, n, m);
            INFO("n = " << n << ", m = " << m);
            REQUIRE_FALSE(rep.tail.vacuous);
            REQUIRE_FALSE(rep.inverse.vacuous);
            CHECK(rep.tail.pass);
            CHECK(rep.inverse.pass);
            CHECK(rep.tail.ratio() <= projection_constant / n * (1.0 + 1e-12));
            CHECK(rep.inverse.ratio() <= projection_constant * n * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("single-mode tail ratio follows the multiplier law", "[regularize]") {
    const GridShape g{32, 32};
    SpectralField f(g, Parity::Even);
    f.set_mode_pair(0, 6, cd{0.3, 0.0});
    f.enforce();
    const double n = 2.0 * std::numbers::pi;  // keeps |m| <= 1: the mode is pure tail
    for (int m = 0; m <= 2; ++m) {
        const PoincareReport rep = poincare_check(f, n, m);
        REQUIRE_FALSE(rep.tail.vacuous);
        const double k2 = two_pi * 6.0;
        const double expected = std::sqrt(multiplier_sum(m, 0.0, k2) / multiplier_sum(m + 1, 0.0, k2));
        CHECK(rep.tail.ratio() == Catch::Approx(expected).epsilon(1e-12));
        CHECK(rep.tail.pass);
        // Only the mean survives the projection here.
        CHECK(rep.inverse.vacuous);
    }
}

TEST_CASE("projection inequalities flag vacuous sides", "[regularize]") {
    const GridShape g{32, 32};
    SpectralField f(g, Parity::Even);
    f.set_mode_pair(1, 1, cd{0.5, 0.25});
    f.set_mode_pair(0, 2, cd{-0.125, 0.0});
    f.enforce();

    const PoincareReport wide = poincare_check(f, 100.0, 1);
    CHECK(wide.tail.vacuous);
    CHECK(wide.tail.pass);
    REQUIRE_FALSE(wide.inverse.vacuous);
    CHECK(wide.inverse.pass);

    const SpectralField zero(g, Parity::Even);
    const PoincareReport empty = poincare_check(zero, 10.0, 1);
    CHECK(empty.tail.vacuous);
    CHECK(empty.inverse.vacuous);
    CHECK(empty.tail.pass);
    CHECK(empty.inverse.pass);
}

TEST_CASE("doubling the projection radius at least halves the curvature gap", "[regularize]") {
    const GridShape g{64, 64};
    const SpectralField u0 = random_field(g, Parity::Even, 20, 6.0, 7u);
    auto curvature_gap = [&](double n) {
        const SpectralField d = u0 - spectral_projection(u0, n);
        return linf_norm(derivative(d, 1, 2));
    };
    const double d4 = curvature_gap(4.0 * std::numbers::pi);
    const double d8 = curvature_gap(8.0 * std::numbers::pi);
    const double d16 = curvature_gap(16.0 * std::numbers::pi);
    REQUIRE(d16 > 0.0);
    CHECK(d8 <= 0.5 * d4);
    CHECK(d16 <= 0.5 * d8);
}
