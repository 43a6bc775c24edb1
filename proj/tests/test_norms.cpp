#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hspe/initial_data.hpp"
#include "hspe/norms.hpp"
#include "oracle_helpers.hpp"

using namespace hspe;
using oracle::pi;

TEST_CASE("single-mode Sobolev norms match closed forms", "[norms]") {
    const GridShape g{32, 32};
    auto pz = PhysicalField::sample(g, [](double, double z) { return std::cos(2 * pi * z); });
    auto px = PhysicalField::sample(g, [](double x, double) { return std::cos(2 * pi * x); });
    const SpectralField fz = forward_transform(pz, Parity::Even);
    const SpectralField fx = forward_transform(px, Parity::Even);

    const double w2 = (2 * pi) * (2 * pi);
    CHECK(hs_norm(fz, 1).value == Catch::Approx(std::sqrt(0.5 * (1 + w2))).epsilon(1e-13));
    CHECK(hs_norm(fx, 2).value ==
          Catch::Approx(std::sqrt(0.5 * (1 + w2 + w2 * w2))).epsilon(1e-13));
    CHECK(hs_norm(fz, 0).value == Catch::Approx(l2_norm(fz)).epsilon(1e-14));
}

TEST_CASE("hs_norm equals the sum of squared derivative norms", "[norms]") {
    // Oracle: for each multi-index evaluate D^alpha f by direct series
    // synthesis and integrate by grid quadrature on a 4x finer grid.
    const GridShape g{16, 16};
    std::mt19937_64 rng(3);
    const SpectralField f = oracle::random_field(g, Parity::Even, 4, 1.0, rng);
    const int s = 2;
    const GridShape fine{64, 64};
    double want_sq = 0.0;
    for (int a = 0; a <= s; ++a) {
        for (int b = 0; a + b <= s; ++b) {
            double term = 0.0;
            for (int ix = 0; ix < fine.nx; ++ix)
                for (int iz = 0; iz < fine.nz; ++iz) {
                    const double x = static_cast<double>(ix) / fine.nx;
                    const double z = static_cast<double>(iz) / fine.nz;
                    const double d = oracle::naive_derivative_at(f, a, b, x, z);
                    term += d * d;
                }
            want_sq += term / static_cast<double>(fine.size());
        }
    }
    CHECK(hs_norm(f, s).value == Catch::Approx(std::sqrt(want_sq)).epsilon(1e-12));
}

TEST_CASE("norm index guard", "[norms]") {
    SpectralField f({32, 32}, Parity::Even);
    CHECK_THROWS_AS(hs_norm(f, 13), ValidationError);
    CHECK_THROWS_AS(hs_norm(f, -1), ValidationError);
    CHECK_NOTHROW(hs_norm(f, 12));
}

TEST_CASE("norms are absolutely homogeneous", "[norms]") {
    std::mt19937_64 rng(11);
    const SpectralField u = oracle::random_h_field({64, 64}, 10, 1.5, rng);
    const SpectralField au = -2.5 * u;
    const double a = 2.5;
    CHECK(hs_norm(au, 3).value == Catch::Approx(a * hs_norm(u, 3).value).epsilon(1e-12));
    CHECK(ds_norm(au, 4).value == Catch::Approx(a * ds_norm(u, 4).value).epsilon(1e-12));
    CHECK(l2_norm(au) == Catch::Approx(a * l2_norm(u)).epsilon(1e-12));
}

TEST_CASE("weighted norm matches a hand-built quadrature oracle", "[norms]") {
    // f = -cos(2 pi z)/(2 pi) + eps cos(2 pi x) sin(2 pi z); s = 2;
    // weight = max(d_z f, floor).  All derivative factors are hand-coded.
    const GridShape g{64, 64};
    const double eps = 0.01;
    auto pf = PhysicalField::sample(g, [&](double x, double z) {
        return -std::cos(2 * pi * z) / (2 * pi) + eps * std::cos(2 * pi * x) * std::sin(2 * pi * z);
    });
    const SpectralField f = forward_transform(pf, Parity::None);
    const ZBand band{0.1, 0.4};
    const double kappa = 0.1;

    auto d_z = [&](double x, double z) {
        return std::sin(2 * pi * z) + eps * 2 * pi * std::cos(2 * pi * x) * std::cos(2 * pi * z);
    };
    auto d_xx = [&](double x, double z) {
        return -eps * (2 * pi) * (2 * pi) * std::cos(2 * pi * x) * std::sin(2 * pi * z);
    };
    // the five unweighted classes: id, d_x, d_z, d_xz, d_zz
    auto d_x = [&](double x, double z) { return -eps * 2 * pi * std::sin(2 * pi * x) * std::sin(2 * pi * z); };
    auto d_xz = [&](double x, double z) {
        return -eps * (2 * pi) * (2 * pi) * std::sin(2 * pi * x) * std::cos(2 * pi * z);
    };
    auto d_zz = [&](double x, double z) {
        return 2 * pi * std::cos(2 * pi * z) - eps * (2 * pi) * (2 * pi) * std::cos(2 * pi * x) * std::sin(2 * pi * z);
    };
    auto f_val = [&](double x, double z) {
        return -std::cos(2 * pi * z) / (2 * pi) + eps * std::cos(2 * pi * x) * std::sin(2 * pi * z);
    };

    double want_sq = 0.0;
    for (int ix = 0; ix < g.nx; ++ix) {
        for (int iz = 0; iz < g.nz; ++iz) {
            const double x = static_cast<double>(ix) / g.nx;
            const double z = static_cast<double>(iz) / g.nz;
            const double unw = f_val(x, z) * f_val(x, z) + d_x(x, z) * d_x(x, z) +
                               d_z(x, z) * d_z(x, z) + d_xz(x, z) * d_xz(x, z) +
                               d_zz(x, z) * d_zz(x, z);
            const double w = std::max(d_z(x, z), kappa);
            want_sq += unw + d_xx(x, z) * d_xx(x, z) / w;
        }
    }
    want_sq /= static_cast<double>(g.size());

    const NormReport rep = weighted_hs_norm(f, 2, WeightMode::strict(kappa), band);
    CHECK(rep.value == Catch::Approx(std::sqrt(want_sq)).epsilon(1e-10));
    CHECK(rep.weight_mode == "strict");
    CHECK(rep.value * rep.value ==
          Catch::Approx(rep.components.at("unweighted_sq") + rep.components.at("weighted_sq"))
              .epsilon(1e-13));
}

TEST_CASE("strict mode rejects shear below kappa on the band, floored accepts", "[norms]") {
    const GridShape g{64, 64};
    // d_z f = sin(2 pi z) turns negative for z > 1/2 and stays tiny near 0;
    // on a band reaching z = 0.49 the strict window must fail.
    auto pf = PhysicalField::sample(g, [](double, double z) { return -std::cos(2 * pi * z) / (2 * pi); });
    const SpectralField f = forward_transform(pf, Parity::None);
    const ZBand wide{0.02, 0.49};
    bool threw = false;
    try {
        weighted_hs_norm(f, 2, WeightMode::strict(0.2), wide);
    } catch (const RayleighViolation& e) {
        threw = true;
        CHECK(e.report.min_val < 0.2);
        CHECK(e.report.violated_fraction > 0.0);
        CHECK(e.report.pass == false);
    }
    CHECK(threw);
    CHECK_NOTHROW(weighted_hs_norm(f, 2, WeightMode::floored(0.2), wide));
}

TEST_CASE("drift-control norm of a constant is its magnitude", "[norms]") {
    SpectralField f({32, 32}, Parity::Even);
    f.set_coeff(0, 0, cd{-0.75, 0.0});
    f.enforce();
    CHECK(ds_norm(f, 6).value == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("weighted top term obeys the exact weight sandwich", "[norms]") {
    // With effective weight w(x) in [wmin, wmax], the quadrature sum of
    // (d_x^s v)^2 / w is monotonically pinched between the unweighted sum
    // divided by wmax and by wmin; this holds term by term in fp arithmetic.
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const VelocityState st = sample_state({64, 64}, 0.2, ZBand{}, 0.2, seed);
        const NormReport rep = weighted_hs_norm(st.v(), 4, WeightMode::strict(0.2));
        const double top = rep.components.at("top_x_grid_sq");
        const double wmin = rep.components.at("weight_min");
        const double wmax = rep.components.at("weight_max");
        const double ws = rep.components.at("weighted_sq");
        REQUIRE(wmin > 0.0);
        CHECK(ws >= top / wmax * (1.0 - 1e-12));
        CHECK(ws <= top / wmin * (1.0 + 1e-12));
    }
}

TEST_CASE("mixed derivatives of u are controlled by the shear", "[norms]") {
    // |D^alpha u| <= |v|_{H^k} for |alpha| = k <= s unless alpha is the pure
    // x-derivative: integrate the z-factor by parts through v = d_z u.
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 10; ++rep) {
        const SpectralField u = oracle::random_h_field({64, 64}, 12, 1.0, rng);
        const SpectralField v = derivative(u, 1, 1);
        for (int k = 1; k <= 4; ++k) {
            const double vk = hs_norm(v, k).value;
            for (int a = 0; a < k; ++a) {
                const int b = k - a;  // b >= 1
                const double da = l2_norm(derivative(derivative(u, 0, a), 1, b));
                CHECK(da <= vk * (1.0 + 1e-12));
            }
        }
    }
}

TEST_CASE("rayleigh monitor reproduces band extrema of a pure cosine curvature", "[norms]") {
    // d_zz u = cos(2 pi z) on an 80-point grid containing z = 0.05, 0.2, 0.3.
    const GridShape g{16, 80};
    SpectralField u(g, Parity::Even);
    u.set_mode_pair(0, 1, cd{-1.0 / (2.0 * two_pi * two_pi), 0.0});

    const RayleighReport ok = rayleigh_monitor(u, 0.1, ZBand{0.05, 0.20});
    CHECK(ok.pass);
    CHECK(ok.min_val == Catch::Approx(std::cos(0.4 * pi)).epsilon(1e-12));
    CHECK(ok.max_val == Catch::Approx(std::cos(0.1 * pi)).epsilon(1e-12));
    CHECK(ok.violated_fraction == 0.0);

    const RayleighReport bad = rayleigh_monitor(u, 0.1, ZBand{0.05, 0.30});
    CHECK_FALSE(bad.pass);
    CHECK(bad.min_val == Catch::Approx(-std::cos(0.4 * pi)).epsilon(1e-12));
    CHECK(bad.violated_fraction == Catch::Approx(6.0 / 21.0).epsilon(1e-12));
}

TEST_CASE("grid max distance is a tight lower bound of the true sup", "[norms]") {
    std::mt19937_64 rng(31);
    const GridShape g{64, 64};
    const SpectralField f = oracle::random_field(g, Parity::Even, 10, 2.0, rng);
    const SpectralField h = oracle::random_field(g, Parity::Even, 10, 2.0, rng);
    const double coarse = linf_distance(f, h);
    const PhysicalField fine = synthesize_on(f - h, GridShape{512, 512});
    const double refined = fine.max_abs();
    CHECK(coarse <= refined * (1.0 + 1e-12));
    CHECK(refined <= coarse * 1.05);
}

TEST_CASE("sample states hold the Rayleigh window at 2 kappa", "[norms]") {
    for (uint64_t seed : {10ull, 11ull}) {
        const VelocityState st = sample_state({64, 64}, 0.2, ZBand{}, 0.2, seed);
        const RayleighReport rep = rayleigh_monitor(st, 0.4);
        CHECK(rep.pass);
        CHECK(rep.min_val >= 0.4);
        CHECK(rep.max_val <= 2.5);
    }
}
