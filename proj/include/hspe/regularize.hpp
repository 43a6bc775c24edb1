#pragma once

// Cut-off functions and spectral projections.
//
// theta_rho is exactly 1 on [0, rho/2] and exactly 0 on [rho, inf), with a
// non-increasing transition.  The exponential family is the classical
// partition-of-unity ratio built from g(t) = exp(-1/t) (smooth); the default
// quintic family matches value, slope, and curvature at both ends (C^2),
// which is all the discrete stepping can see, and keeps theta cheap and
// branch-predictable in the hot loop.

#include <cmath>
#include <string>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"
#include "hspe/norms.hpp"

namespace hspe {

enum class CutoffFamily { SmoothExponential, QuinticPolynomial };

inline const char* to_string(CutoffFamily f) {
    return f == CutoffFamily::SmoothExponential ? "smooth-exponential" : "quintic-polynomial";
}

inline CutoffFamily cutoff_family_from_string(const std::string& s) {
    if (s == "smooth-exponential") return CutoffFamily::SmoothExponential;
    if (s == "quintic-polynomial") return CutoffFamily::QuinticPolynomial;
    throw ValidationError("unknown cutoff family: " + s);
}

struct CutoffSpec {
    double radius = 1.0;
    CutoffFamily family = CutoffFamily::QuinticPolynomial;
};

inline void validate_cutoff(const CutoffSpec& c) {
    if (!(c.radius > 0.0)) throw ValidationError("cutoff radius must be positive");
}

namespace detail {

/// C^2 smoothstep: 0 -> 1 on [0, 1] with zero slope and curvature at ends.
inline double quintic_step(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }

inline double exp_bump(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

}  // namespace detail

/// Evaluate theta(x): 1 on [0, radius/2], 0 on [radius, inf), non-increasing.
inline double theta(const CutoffSpec& spec, double x) {
    validate_cutoff(spec);
    if (x < 0.0) throw ValidationError("theta: argument must be nonnegative");
    const double half = 0.5 * spec.radius;
    if (x <= half) return 1.0;
    if (x >= spec.radius) return 0.0;
    const double t = (x - half) / half;
    if (spec.family == CutoffFamily::QuinticPolynomial) return 1.0 - detail::quintic_step(t);
    const double a = detail::exp_bump(1.0 - t);
    const double b = detail::exp_bump(t);
    return a / (a + b);
}

/// Upper bound for |theta'|; 4/radius covers both families
/// (exponential: exactly 4/radius at midpoint; quintic: 15/(8*(radius/2))).
inline double theta_lipschitz_bound(const CutoffSpec& spec) {
    validate_cutoff(spec);
    if (spec.family == CutoffFamily::QuinticPolynomial) return 15.0 / (8.0 * (0.5 * spec.radius));
    return 4.0 / spec.radius;
}

/// Low-pass projection P_n: zero all modes with |k| > n, k = 2 pi m.
/// n is a physical radius (any positive real, not a mode count).
inline SpectralField spectral_projection(const SpectralField& f, double n) {
    if (!(n >= 0.0)) throw ValidationError("projection radius must be nonnegative");
    SpectralField out = f;
    const double r_sq = (n / two_pi) * (n / two_pi);
    out.for_each_mode([&](int m1, int m2, size_t idx) {
        const double mm = static_cast<double>(m1) * m1 + static_cast<double>(m2) * m2;
        if (mm > r_sq) out.coeffs()[idx] = cd{0.0, 0.0};
    });
    return out;
}

/// One side of a projection inequality: lhs <= bound * rhs, with a vacuity
/// flag instead of 0/0 ratios.
struct ProjectionBound {
    double lhs = 0.0;
    double rhs = 0.0;
    double bound = 0.0;  // the factor multiplying rhs
    bool vacuous = true;
    bool pass = true;
    double ratio() const { return vacuous ? 0.0 : lhs / rhs; }
};

struct PoincareReport {
    ProjectionBound tail;     // |(I-P_n) f|_{H^m}  <= (C_m / n) |(I-P_n) f|_{H^{m+1}}
    ProjectionBound inverse;  // |P_n f|_{H^{m+1}}  <= C_m n |P_n f|_{H^m}
    double n = 0.0;
    int m = 0;
};

inline constexpr double projection_constant = std::numbers::sqrt2;

/// Measure both projection inequalities for one field at radius n, order m.
inline PoincareReport poincare_check(const SpectralField& f, double n, int m) {
    validate_s(m + 1);
    if (!(n > 0.0)) throw ValidationError("poincare_check: projection radius must be positive");
    PoincareReport rep;
    rep.n = n;
    rep.m = m;
    const SpectralField low = spectral_projection(f, n);
    const SpectralField tail = f - low;

    const double tol = 0.0;  // exact zero: projections only zero coefficients
    if (l2_norm(tail) > tol) {
        rep.tail.lhs = hs_norm(tail, m).value;
        rep.tail.rhs = hs_norm(tail, m + 1).value;
        rep.tail.bound = projection_constant / n;
        rep.tail.vacuous = false;
        rep.tail.pass = rep.tail.lhs <= rep.tail.bound * rep.tail.rhs * (1.0 + 1e-12);
    }
    if (l2_norm(low) > tol) {
        rep.inverse.lhs = hs_norm(low, m + 1).value;
        rep.inverse.rhs = hs_norm(low, m).value;
        rep.inverse.bound = projection_constant * n;
        rep.inverse.vacuous = false;
        rep.inverse.pass = rep.inverse.lhs <= rep.inverse.bound * rep.inverse.rhs * (1.0 + 1e-12);
    }
    return rep;
}

}  // namespace hspe
