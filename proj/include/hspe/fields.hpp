#pragma once

// Velocity-state handling for the hydrostatic setting.
//
// The horizontal velocity u lives in
//   H = { phi in L^2(T^2) : phi even in z, int_0^1 dx phi dz = 0 },
// i.e. its (m1 != 0, m2 = 0) coefficients vanish.  That is exactly the
// condition under which the incompressibility relation w_z = -u_x can be
// integrated to a periodic vertical velocity with w(x, 0) = 0.  The part a
// projection onto H removes is a z-independent field, the discrete stand-in
// for the horizontal pressure gradient.

#include <cmath>
#include <utility>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"

namespace hspe {

/// Largest |coefficient| on the forbidden row (m1 != 0, m2 = 0).
inline double h_defect(const SpectralField& f) {
    double r = 0.0;
    for (int m1 = 1; m1 <= f.max_mode_x(); ++m1) {
        r = std::max(r, std::abs(f.coeff(m1, 0)));
        r = std::max(r, std::abs(f.coeff(-m1, 0)));
    }
    return r;
}

/// Orthogonal projection onto H: zeroes the (m1 != 0, m2 = 0) row.
inline SpectralField project_to_h(const SpectralField& f) {
    SpectralField out = f;
    for (int m1 = 1; m1 <= f.max_mode_x(); ++m1) {
        out.coeffs()[out.index_of(m1, 0)] = cd{0.0, 0.0};
        out.coeffs()[out.index_of(-m1, 0)] = cd{0.0, 0.0};
    }
    return out;
}

/// Projection result carrying the removed complement, which is z-independent
/// and plays the role of the -dp/dx drift absorbed by the pressure.
struct HSplit {
    SpectralField in_h;
    SpectralField removed;
};

inline HSplit split_h(const SpectralField& f) {
    HSplit s{project_to_h(f), SpectralField(f.grid(), f.parity())};
    s.removed = f - s.in_h;
    return s;
}

/// Vertical velocity from incompressibility:
///   w(x,z) = -int_0^z du/dx dz',  coefficientwise w(m) = -(m1/m2) u(m).
/// Requires u in H; otherwise the antiderivative is not periodic.
inline SpectralField vertical_velocity(const SpectralField& u, double h_tol = 1e-10) {
    if (u.parity() != Parity::Even)
        throw ValidationError("vertical_velocity: horizontal velocity must be even in z");
    const double defect = h_defect(u);
    const double scale = std::max(1.0, u.max_abs_coeff());
    if (defect > h_tol * scale)
        throw NumericalError("nonintegrable vertical velocity: mean-in-z constraint violated (defect " +
                             std::to_string(defect) + ")");
    SpectralField w(u.grid(), Parity::Odd);
    u.for_each_mode([&](int m1, int m2, size_t idx) {
        if (m2 != 0)
            w.coeffs()[idx] = -(static_cast<double>(m1) / static_cast<double>(m2)) * u.coeffs()[idx];
    });
    w.enforce();
    return w;
}

/// Shear dv = du/dz of the horizontal velocity (the hydrostatic vorticity).
inline SpectralField vorticity(const SpectralField& u) { return derivative(u, 1, 1); }

/// Horizontal velocity plus its derived fields, kept consistent on
/// construction: v = du/dz (odd), w from incompressibility (odd, w(x,0)=0).
class VelocityState {
  public:
    VelocityState() = default;

    /// Build from u; rejects parity or H violations above h_tol, then snaps
    /// the retained coefficients exactly onto H.
    static VelocityState from_u(SpectralField u, double time = 0.0, double h_tol = 1e-10) {
        if (u.parity() != Parity::Even)
            throw ValidationError("velocity state: u must carry even parity");
        const double defect = h_defect(u);
        if (defect > h_tol * std::max(1.0, u.max_abs_coeff()))
            throw NumericalError("velocity state: field leaves H (defect " + std::to_string(defect) + ")");
        VelocityState s;
        s.u_ = project_to_h(u);
        s.u_.enforce();
        s.v_ = vorticity(s.u_);
        s.w_ = vertical_velocity(s.u_);
        s.time_ = time;
        return s;
    }

    const SpectralField& u() const { return u_; }
    const SpectralField& v() const { return v_; }
    const SpectralField& w() const { return w_; }
    double time() const { return time_; }

    const GridShape& grid() const { return u_.grid(); }

    /// L^2 norm of du/dx + dw/dz; identically zero up to rounding.
    double incompressibility_residual() const {
        return l2_norm(derivative(u_, 0, 1) + derivative(w_, 1, 1));
    }

  private:
    SpectralField u_, v_, w_;
    double time_ = 0.0;
};

}  // namespace hspe
