#pragma once

// Spectral representation on the unit torus T^2 = [0,1)^2.
//
// A field f(x,z) = sum_m c(m) e^{2 pi i (m1 x + m2 z)} is stored as complex
// coefficients over integer wavevectors m in FFT layout; the physical
// wavevector is k = 2 pi m.  Real fields satisfy c(-m) = conj(c(m)); parity
// in z is tracked explicitly (even / odd / none).  All operations keep
// coefficients inside the 2/3-rule band |m_i| <= floor(n_i/3), so pointwise
// products are alias-free on the kept band.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspe/errors.hpp"
#include "hspe/fft.hpp"

namespace hspe {

using cd = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct GridShape {
    int nx = 64;
    int nz = 64;
    bool operator==(const GridShape&) const = default;
    size_t size() const { return static_cast<size_t>(nx) * static_cast<size_t>(nz); }
};

inline void validate_grid(const GridShape& g) {
    if (g.nx < 4 || g.nz < 4)
        throw ValidationError("grid too small: need nx, nz >= 4, got " + std::to_string(g.nx) +
                              "x" + std::to_string(g.nz));
}

/// Largest integer wavenumber kept by the 2/3 dealiasing rule on n points.
/// The band must satisfy 3*limit < n so that sums of two kept modes can
/// never alias back into the kept band; for n = 64 this is the usual 21.
inline int dealias_limit(int n) { return (n - 1) / 3; }

enum class Parity { Even, Odd, None };

inline Parity flip(Parity p) {
    if (p == Parity::Even) return Parity::Odd;
    if (p == Parity::Odd) return Parity::Even;
    return Parity::None;
}

/// Parity of a pointwise product: even*even = odd*odd = even, mixed = odd,
/// and "none" contaminates.
inline Parity product_parity(Parity a, Parity b) {
    if (a == Parity::None || b == Parity::None) return Parity::None;
    return (a == b) ? Parity::Even : Parity::Odd;
}

inline Parity sum_parity(Parity a, Parity b) { return (a == b) ? a : Parity::None; }

inline const char* to_string(Parity p) {
    switch (p) {
        case Parity::Even: return "even";
        case Parity::Odd: return "odd";
        default: return "none";
    }
}

inline Parity parity_from_string(const std::string& s) {
    if (s == "even") return Parity::Even;
    if (s == "odd") return Parity::Odd;
    if (s == "none") return Parity::None;
    throw ValidationError("unknown parity tag: " + s);
}

/// Real values on the uniform grid x_i = i/nx, z_j = j/nz, row-major in x
/// (value(ix, iz) sits at index ix*nz + iz).
class PhysicalField {
  public:
    PhysicalField() = default;
    PhysicalField(GridShape g, double fill = 0.0) : grid_(g), v_(g.size(), fill) {
        validate_grid(g);
    }
    PhysicalField(GridShape g, std::vector<double> values) : grid_(g), v_(std::move(values)) {
        validate_grid(g);
        if (v_.size() != grid_.size()) throw ValidationError("physical field: value count does not match grid");
    }

    const GridShape& grid() const { return grid_; }
    double& at(int ix, int iz) { return v_[static_cast<size_t>(ix) * grid_.nz + iz]; }
    double at(int ix, int iz) const { return v_[static_cast<size_t>(ix) * grid_.nz + iz]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    double x_of(int ix) const { return static_cast<double>(ix) / grid_.nx; }
    double z_of(int iz) const { return static_cast<double>(iz) / grid_.nz; }

    double max_abs() const {
        double m = 0.0;
        for (double x : v_) m = std::max(m, std::abs(x));
        return m;
    }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    /// Sample the continuous map (x,z) -> f over the grid.
    template <class F>
    static PhysicalField sample(GridShape g, F&& f) {
        PhysicalField out(g);
        for (int ix = 0; ix < g.nx; ++ix)
            for (int iz = 0; iz < g.nz; ++iz)
                out.at(ix, iz) = f(static_cast<double>(ix) / g.nx, static_cast<double>(iz) / g.nz);
        return out;
    }

  private:
    GridShape grid_{};
    std::vector<double> v_;
};

/// Complex Fourier coefficients of a real field, with a parity tag for the
/// z-reflection symmetry.  Storage covers the full FFT index range; the
/// class invariant keeps everything outside the dealias band at exact zero.
class SpectralField {
  public:
    SpectralField() = default;
    SpectralField(GridShape g, Parity p) : grid_(g), parity_(p), c_(g.size(), cd{0.0, 0.0}) {
        validate_grid(g);
    }

    const GridShape& grid() const { return grid_; }
    Parity parity() const { return parity_; }
    void set_parity(Parity p) { parity_ = p; }

    int max_mode_x() const { return dealias_limit(grid_.nx); }
    int max_mode_z() const { return dealias_limit(grid_.nz); }

    /// Storage index of integer wavevector (m1, m2); indices wrap mod n.
    size_t index_of(int m1, int m2) const {
        const int i = ((m1 % grid_.nx) + grid_.nx) % grid_.nx;
        const int j = ((m2 % grid_.nz) + grid_.nz) % grid_.nz;
        return static_cast<size_t>(i) * grid_.nz + j;
    }

    /// Coefficient at wavevector (m1, m2); zero outside storage range.
    cd coeff(int m1, int m2) const {
        if (std::abs(m1) > grid_.nx / 2 || std::abs(m2) > grid_.nz / 2) return cd{0.0, 0.0};
        return c_[index_of(m1, m2)];
    }

    /// Raw coefficient write; caller is responsible for restoring the
    /// reality/parity invariants (see enforce()) before handing the field on.
    void set_coeff(int m1, int m2, cd v) {
        if (std::abs(m1) > max_mode_x() || std::abs(m2) > max_mode_z())
            throw ValidationError("set_coeff: wavevector outside dealias band");
        c_[index_of(m1, m2)] = v;
    }

    /// Write the orbit of (m1, m2) under reality and the tagged parity in one
    /// go, so the invariants hold by construction.
    void set_mode_pair(int m1, int m2, cd v) {
        set_coeff(m1, m2, v);
        c_[index_of(-m1, -m2)] = std::conj(v);
        if (parity_ == Parity::Even) {
            c_[index_of(m1, -m2)] = v;
            c_[index_of(-m1, m2)] = std::conj(v);
        } else if (parity_ == Parity::Odd) {
            c_[index_of(m1, -m2)] = -v;
            c_[index_of(-m1, m2)] = -std::conj(v);
        }
        enforce();
    }

    const std::vector<cd>& coeffs() const { return c_; }
    std::vector<cd>& coeffs() { return c_; }

    /// Visit every stored mode as (m1, m2, flat index).
    template <class F>
    void for_each_mode(F&& f) const {
        for (int i = 0; i < grid_.nx; ++i) {
            const int m1 = (i <= grid_.nx / 2) ? i : i - grid_.nx;
            for (int j = 0; j < grid_.nz; ++j) {
                const int m2 = (j <= grid_.nz / 2) ? j : j - grid_.nz;
                f(m1, m2, static_cast<size_t>(i) * grid_.nz + j);
            }
        }
    }

    /// Restore the class invariants exactly: zero outside the dealias band,
    /// then average over the parity orbit and the reality orbit.  Idempotent
    /// bitwise; a no-op on fields that already satisfy the invariants.
    void enforce() {
        const int mx = max_mode_x(), mz = max_mode_z();
        for_each_mode([&](int m1, int m2, size_t idx) {
            if (std::abs(m1) > mx || std::abs(m2) > mz) c_[idx] = cd{0.0, 0.0};
        });
        if (parity_ != Parity::None) {
            std::vector<cd> old = c_;
            const double sign = (parity_ == Parity::Even) ? 1.0 : -1.0;
            for_each_mode([&](int m1, int m2, size_t idx) {
                c_[idx] = 0.5 * (old[idx] + sign * old[index_of(m1, -m2)]);
            });
        }
        std::vector<cd> old = c_;
        for_each_mode([&](int m1, int m2, size_t idx) {
            c_[idx] = 0.5 * (old[idx] + std::conj(old[index_of(-m1, -m2)]));
        });
    }

    /// Largest |c(m) - conj(c(-m))| over the band (reality defect).
    double reality_residual() const {
        double r = 0.0;
        for_each_mode([&](int m1, int m2, size_t idx) {
            r = std::max(r, std::abs(c_[idx] - std::conj(c_[index_of(-m1, -m2)])));
        });
        return r;
    }

    /// Largest parity defect |c(m1,m2) -+ c(m1,-m2)|; zero for untagged fields.
    double parity_residual() const {
        if (parity_ == Parity::None) return 0.0;
        const double sign = (parity_ == Parity::Even) ? 1.0 : -1.0;
        double r = 0.0;
        for_each_mode([&](int m1, int m2, size_t idx) {
            r = std::max(r, std::abs(c_[idx] - sign * c_[index_of(m1, -m2)]));
        });
        return r;
    }

    /// Largest coefficient magnitude outside the dealias band.
    double dealias_residual() const {
        const int mx = max_mode_x(), mz = max_mode_z();
        double r = 0.0;
        for_each_mode([&](int m1, int m2, size_t idx) {
            if (std::abs(m1) > mx || std::abs(m2) > mz) r = std::max(r, std::abs(c_[idx]));
        });
        return r;
    }

    double max_abs_coeff() const {
        double r = 0.0;
        for (const cd& v : c_) r = std::max(r, std::abs(v));
        return r;
    }

    bool all_finite() const {
        for (const cd& v : c_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    SpectralField& operator+=(const SpectralField& o) {
        require_same_grid(o);
        parity_ = sum_parity(parity_, o.parity_);
        for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o) {
        require_same_grid(o);
        parity_ = sum_parity(parity_, o.parity_);
        for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    SpectralField& operator*=(double a) {
        for (cd& v : c_) v *= a;
        return *this;
    }

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double a, SpectralField f) { return f *= a; }

    void require_same_grid(const SpectralField& o) const {
        if (!(grid_ == o.grid_)) throw ValidationError("spectral fields live on different grids");
    }

  private:
    GridShape grid_{};
    Parity parity_ = Parity::None;
    std::vector<cd> c_;
};

/// L^2(T^2) inner product of two real fields, via Parseval.
inline double inner_product(const SpectralField& f, const SpectralField& g) {
    f.require_same_grid(g);
    double acc = 0.0;
    const auto& a = f.coeffs();
    const auto& b = g.coeffs();
    for (size_t i = 0; i < a.size(); ++i)
        acc += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return acc;
}

inline double l2_norm(const SpectralField& f) {
    double acc = 0.0;
    for (const cd& v : f.coeffs()) acc += std::norm(v);
    return std::sqrt(acc);
}

/// Grid values -> coefficients.  The declared parity is enforced by averaging
/// the input with its z-reflection before transforming, so the returned field
/// satisfies the parity invariant exactly even for slightly asymmetric input.
inline SpectralField forward_transform(const PhysicalField& f, Parity parity) {
    if (!f.all_finite()) throw NumericalError("forward_transform: non-finite grid values");
    const GridShape g = f.grid();
    std::vector<cd> a(g.size());
    if (parity == Parity::None) {
        for (size_t i = 0; i < a.size(); ++i) a[i] = cd{f.values()[i], 0.0};
    } else {
        const double sign = (parity == Parity::Even) ? 1.0 : -1.0;
        for (int ix = 0; ix < g.nx; ++ix)
            for (int iz = 0; iz < g.nz; ++iz) {
                const int jr = (g.nz - iz) % g.nz;
                const double v = 0.5 * (f.at(ix, iz) + sign * f.at(ix, jr));
                a[static_cast<size_t>(ix) * g.nz + iz] = cd{v, 0.0};
            }
    }
    fft::transform_2d(a, g.nx, g.nz, /*inverse=*/false);
    const double scale = 1.0 / static_cast<double>(g.size());
    for (cd& v : a) v *= scale;
    SpectralField out(g, parity);
    out.coeffs() = std::move(a);
    out.enforce();
    return out;
}

/// Coefficients -> grid values.  Rejects fields whose reality invariant is
/// broken (synthesis would have a spurious imaginary part).
inline PhysicalField inverse_transform(const SpectralField& f) {
    std::vector<cd> a = f.coeffs();
    const GridShape g = f.grid();
    fft::transform_2d(a, g.nx, g.nz, /*inverse=*/true);
    double max_re = 0.0, max_im = 0.0;
    for (const cd& v : a) {
        max_re = std::max(max_re, std::abs(v.real()));
        max_im = std::max(max_im, std::abs(v.imag()));
    }
    if (max_im > 1e-12 * std::max(1.0, max_re))
        throw NumericalError("inverse_transform: field violates the reality constraint (imaginary residue " +
                             std::to_string(max_im) + ")");
    PhysicalField out(g);
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a[i].real();
    if (!out.all_finite()) throw NumericalError("inverse_transform: non-finite result");
    return out;
}

/// Evaluate the trigonometric polynomial on a finer grid (exact synthesis;
/// both target sizes must be at least the source sizes).
inline PhysicalField synthesize_on(const SpectralField& f, GridShape fine) {
    validate_grid(fine);
    if (fine.nx < f.grid().nx || fine.nz < f.grid().nz)
        throw ValidationError("synthesize_on: target grid must refine the source grid");
    SpectralField pad(fine, f.parity());
    f.for_each_mode([&](int m1, int m2, size_t idx) {
        const cd v = f.coeffs()[idx];
        if (v != cd{0.0, 0.0}) pad.coeffs()[pad.index_of(m1, m2)] = v;
    });
    return inverse_transform(pad);
}

/// Partial derivative d^order/d axis^order; axis 0 = x, 1 = z.
/// Coefficientwise multiplication by (i k_axis)^order with k = 2 pi m.
inline SpectralField derivative(const SpectralField& f, int axis, int order) {
    if (axis != 0 && axis != 1) throw ValidationError("derivative: axis must be 0 (x) or 1 (z)");
    if (order < 0) throw ValidationError("derivative: order must be nonnegative");
    if (order == 0) return f;
    SpectralField out(f.grid(), f.parity());
    if (axis == 1 && (order % 2 == 1)) out.set_parity(flip(f.parity()));
    f.for_each_mode([&](int m1, int m2, size_t idx) {
        const int m = (axis == 0) ? m1 : m2;
        double kp = 1.0;
        const double k = two_pi * m;
        for (int r = 0; r < order; ++r) kp *= k;
        cd unit;
        switch (order % 4) {
            case 0: unit = cd{1.0, 0.0}; break;
            case 1: unit = cd{0.0, 1.0}; break;
            case 2: unit = cd{-1.0, 0.0}; break;
            default: unit = cd{0.0, -1.0}; break;
        }
        out.coeffs()[idx] = f.coeffs()[idx] * kp * unit;
    });
    out.enforce();
    return out;
}

/// Dealiased pointwise product.  Both factors are synthesized on the shared
/// grid, multiplied, and transformed back; the 2/3-rule band of the result is
/// alias-free because kept + kept modes cannot wrap into the kept band.
inline SpectralField product(const SpectralField& f, const SpectralField& g) {
    f.require_same_grid(g);
    const PhysicalField pf = inverse_transform(f);
    const PhysicalField pg = inverse_transform(g);
    PhysicalField prod(f.grid());
    for (size_t i = 0; i < prod.values().size(); ++i)
        prod.values()[i] = pf.values()[i] * pg.values()[i];
    return forward_transform(prod, product_parity(f.parity(), g.parity()));
}

}  // namespace hspe
