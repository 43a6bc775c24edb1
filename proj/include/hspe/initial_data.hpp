#pragma once

// Initial-data generators.
//
// A z-periodic even shear cannot satisfy kappa <= d_zz u globally (its mean
// over a period vanishes), so admissible states hold the Rayleigh window on
// the monitored band and pay for it with a negative dip near z = 0 and
// z = 1/2.  rayleigh_window_profile builds exactly that shape: a smooth
// plateau over the band, mean-balanced dips outside, integrated twice in z.

#include <cmath>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"
#include "hspe/fields.hpp"
#include "hspe/norms.hpp"
#include "hspe/regularize.hpp"
#include "hspe/rng.hpp"

namespace hspe {

/// Random real field with reality and parity invariants; coefficients fill
/// |m_i| <= band (clipped to the dealias band) with (1+|m|)^{-decay} damping.
inline SpectralField random_field(GridShape g, Parity parity, int band, double decay,
                                  uint64_t seed, double amplitude = 1.0, uint64_t stream = 0) {
    SpectralField out(g, parity);
    CounterRng rng(seed, stream);
    const int bx = std::min(band, out.max_mode_x());
    const int bz = std::min(band, out.max_mode_z());
    for (int m1 = -bx; m1 <= bx; ++m1) {
        for (int m2 = 0; m2 <= bz; ++m2) {
            if (m1 == 0 && m2 == 0) continue;
            const double damp = amplitude / std::pow(1.0 + std::hypot(m1, m2), decay);
            const double re = (2.0 * rng.uniform() - 1.0) * damp;
            const double im = (2.0 * rng.uniform() - 1.0) * damp;
            out.set_mode_pair(m1, m2, cd{re, im});
        }
    }
    out.enforce();
    return out;
}

/// Random field in H (even, no (m1 != 0, m2 = 0) row).
inline SpectralField random_h_field(GridShape g, int band, double decay, uint64_t seed,
                                    double amplitude = 1.0, uint64_t stream = 0) {
    SpectralField out = random_field(g, Parity::Even, band, decay, seed, amplitude, stream);
    out = project_to_h(out);
    out.enforce();
    return out;
}

/// x-independent u0 whose curvature d_zz u0 sits near 1 across the monitored
/// band (comfortably inside [2 kappa, 1/(2 kappa)] for kappa < 1/2) and dips
/// negative near z = 0 and z = 1/2 to balance the periodic mean.
/// Band-limited to |m2| <= mode_cap; throws if the window check fails.
inline SpectralField rayleigh_window_profile(GridShape g, double kappa, const ZBand& band = ZBand{},
                                             int mode_cap = 14) {
    if (!(kappa > 0.0 && kappa < 0.5)) throw ValidationError("rayleigh profile needs kappa in (0, 1/2)");
    validate_band(band);
    if (!(band.hi < 0.5)) throw ValidationError("rayleigh profile expects the band inside (0, 1/2)");
    if (mode_cap < 4 || mode_cap > dealias_limit(g.nz))
        throw ValidationError("rayleigh profile: mode_cap outside the dealias band");

    // Plateau 1 on [lo, hi] with C^2 ramps down to -dip at z = 0 and z = 1/2,
    // mirrored evenly onto [1/2, 1].
    const double dip = 3.0;
    auto shape = [&](double z) {
        if (z > 0.5) z = 1.0 - z;
        if (z < band.lo) {
            const double t = z / band.lo;
            return -dip + (1.0 + dip) * detail::quintic_step(t);
        }
        if (z <= band.hi) return 1.0;
        const double t = (z - band.hi) / (0.5 - band.hi);
        return 1.0 - (1.0 + dip) * detail::quintic_step(t);
    };

    auto curv = PhysicalField::sample(g, [&](double, double z) { return shape(z); });
    double mean = 0.0;
    for (double v : curv.values()) mean += v;
    mean /= static_cast<double>(g.size());
    const double scale = 1.0 / (1.0 - mean);
    for (double& v : curv.values()) v = scale * (v - mean);

    SpectralField chat = forward_transform(curv, Parity::Even);
    SpectralField u0(g, Parity::Even);
    chat.for_each_mode([&](int m1, int m2, size_t idx) {
        if (m1 != 0 || m2 == 0) return;
        if (std::abs(m2) > mode_cap) return;
        const double k2 = two_pi * m2;
        u0.coeffs()[u0.index_of(0, m2)] = -chat.coeffs()[idx] / (k2 * k2);
    });
    u0.enforce();

    const RayleighReport rep = rayleigh_monitor(u0, 2.0 * kappa, band);
    if (!rep.pass)
        throw NumericalError("rayleigh profile: band-limited curvature left the window [2k, 1/(2k)]");
    return u0;
}

/// Rayleigh-window profile plus a small random x-dependent perturbation in H,
/// scaled so the curvature moves by at most x_amp_rel * kappa in sup norm.
inline VelocityState sample_state(GridShape g, double kappa, const ZBand& band = ZBand{},
                                  double x_amp_rel = 0.2, uint64_t seed = 1, int x_band = 3,
                                  int mode_cap = 14) {
    SpectralField u0 = rayleigh_window_profile(g, kappa, band, mode_cap);
    if (x_amp_rel > 0.0) {
        SpectralField p = random_h_field(g, x_band, 2.0, seed, 1.0);
        const double curv_sup = linf_norm(derivative(p, 1, 2));
        if (curv_sup > 0.0) {
            p *= (x_amp_rel * kappa / curv_sup);
            u0 += p;
        }
    }
    VelocityState s = VelocityState::from_u(u0);
    const RayleighReport rep = rayleigh_monitor(s, 2.0 * kappa, band);
    if (!rep.pass)
        throw NumericalError("sample state: perturbation pushed the curvature out of the window");
    return s;
}

}  // namespace hspe
