#pragma once

// Norm evaluations and the Rayleigh-condition monitor.
//
// H^s uses the exact multi-index multiplier
//   m_s(k) = sum_{a+b <= s} k1^{2a} k2^{2b},  k = 2 pi m,
// so that hs_norm^2 = sum_{|alpha|<=s} |D^alpha f|_{L^2}^2 with no spectral
// shortcut constants.  The shear-weighted variant replaces the pure-x top
// derivative by | d_x^s f / sqrt(d_z f) |_{L^2}, evaluated by grid quadrature
// with the weight floored below (the flooring is what keeps the expression
// finite: a z-periodic even shear cannot stay above kappa globally, so the
// Rayleigh window is enforced on a monitored z-band only).

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"
#include "hspe/fields.hpp"

namespace hspe {

/// Monitored z-interval (inclusive at grid points) for Rayleigh checks.
struct ZBand {
    double lo = 0.05;
    double hi = 0.45;
    bool contains(double z) const { return z >= lo && z <= hi; }
};

inline void validate_band(const ZBand& b) {
    if (!(b.lo >= 0.0 && b.lo < b.hi && b.hi <= 1.0))
        throw ValidationError("monitored band must satisfy 0 <= lo < hi <= 1");
}

struct RayleighReport {
    double kappa = 0.0;
    double min_val = 0.0;
    double max_val = 0.0;
    double violated_fraction = 0.0;
    ZBand band{};
    bool pass = false;
};

/// Thrown by strict-mode weighted norms when the shear dips under kappa on
/// the monitored band.
struct RayleighViolation : NumericalError {
    RayleighViolation(const std::string& msg, RayleighReport r) : NumericalError(msg), report(r) {}
    RayleighReport report;
};

enum class NormKind { L2, Hs, HsWeighted, Ds, DsKappa, CrossWeighted };

inline const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::L2: return "L2";
        case NormKind::Hs: return "Hs";
        case NormKind::HsWeighted: return "Hs_weighted";
        case NormKind::Ds: return "Ds";
        case NormKind::DsKappa: return "Ds_kappa";
        default: return "cross_weighted";
    }
}

/// Weight handling for the shear-weighted terms.  Both modes evaluate with
/// the effective weight max(d_z f, floor); strict additionally rejects
/// fields whose shear drops below kappa on the monitored band.
struct WeightMode {
    enum class Kind { Strict, Floored };
    Kind kind = Kind::Floored;
    double kappa = 0.2;   // strict threshold; also the default floor
    double floor = 0.2;

    static WeightMode strict(double kappa) {
        if (!(kappa > 0.0 && kappa < 0.5))
            throw ValidationError("strict weight mode needs kappa in (0, 1/2)");
        return WeightMode{Kind::Strict, kappa, kappa};
    }
    static WeightMode floored(double floor_value) {
        if (!(floor_value > 0.0)) throw ValidationError("weight floor must be positive");
        return WeightMode{Kind::Floored, floor_value, floor_value};
    }
    const char* name() const { return kind == Kind::Strict ? "strict" : "floored"; }
};

struct NormReport {
    NormKind kind = NormKind::L2;
    int s = 0;
    double value = 0.0;
    std::string weight_mode = "none";
    std::map<std::string, double> components;
};

inline constexpr int max_supported_s = 12;

inline void validate_s(int s) {
    if (s < 0 || s > max_supported_s)
        throw ValidationError("Sobolev index s out of supported range [0, " +
                              std::to_string(max_supported_s) + "]: " + std::to_string(s));
}

namespace detail {

/// Per-order multiplier tables: tables[j][idx] = sum_{a+b=j} k1^{2a} k2^{2b}.
inline const std::vector<std::vector<double>>& order_tables(const GridShape& g, int s) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, int>, std::vector<std::vector<double>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(g.nx, g.nz, s);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    std::vector<std::vector<double>> tables(static_cast<size_t>(s) + 1,
                                            std::vector<double>(g.size(), 0.0));
    SpectralField probe(g, Parity::None);  // for the index walk only
    probe.for_each_mode([&](int m1, int m2, size_t idx) {
        const double k1sq = (two_pi * m1) * (two_pi * m1);
        const double k2sq = (two_pi * m2) * (two_pi * m2);
        for (int j = 0; j <= s; ++j) {
            double sum = 0.0;
            double p1 = 1.0;  // k1^{2a}
            for (int a = 0; a <= j; ++a) {
                double p2 = 1.0;  // k2^{2(j-a)}
                for (int b = 0; b < j - a; ++b) p2 *= k2sq;
                sum += p1 * p2;
                p1 *= k1sq;
            }
            tables[static_cast<size_t>(j)][idx] = sum;
        }
    });
    return cache.emplace(key, std::move(tables)).first->second;
}

}  // namespace detail

inline NormReport l2_report(const SpectralField& f) {
    NormReport r;
    r.kind = NormKind::L2;
    r.value = l2_norm(f);
    return r;
}

/// Exact H^s norm: sqrt(sum_{|alpha|<=s} |D^alpha f|^2), via Parseval.
inline NormReport hs_norm(const SpectralField& f, int s) {
    validate_s(s);
    const auto& tables = detail::order_tables(f.grid(), s);
    NormReport r;
    r.kind = NormKind::Hs;
    r.s = s;
    double total = 0.0;
    for (int j = 0; j <= s; ++j) {
        double part = 0.0;
        const auto& tab = tables[static_cast<size_t>(j)];
        const auto& c = f.coeffs();
        for (size_t i = 0; i < c.size(); ++i) part += tab[i] * std::norm(c[i]);
        r.components["order_" + std::to_string(j) + "_sq"] = part;
        total += part;
    }
    r.value = std::sqrt(total);
    return r;
}

namespace detail {

struct WeightStats {
    PhysicalField effective;  // max(d_z f, floor) on the grid
    RayleighReport band_report;
    double wmin = 0.0, wmax = 0.0;  // extrema of the effective weight
};

/// Effective weight from the shear of `weight_source`, plus band statistics
/// of the raw shear against mode.kappa.
inline WeightStats weight_field(const SpectralField& weight_source, const WeightMode& mode,
                                const ZBand& band) {
    validate_band(band);
    const PhysicalField shear = inverse_transform(derivative(weight_source, 1, 1));
    const GridShape g = shear.grid();
    WeightStats st;
    st.effective = PhysicalField(g);
    double bmin = 0.0, bmax = 0.0;
    bool first = true;
    size_t monitored = 0, violated = 0;
    for (int ix = 0; ix < g.nx; ++ix) {
        for (int iz = 0; iz < g.nz; ++iz) {
            const double raw = shear.at(ix, iz);
            st.effective.at(ix, iz) = std::max(raw, mode.floor);
            if (band.contains(shear.z_of(iz))) {
                ++monitored;
                if (first) {
                    bmin = bmax = raw;
                    first = false;
                } else {
                    bmin = std::min(bmin, raw);
                    bmax = std::max(bmax, raw);
                }
                if (raw < mode.kappa || raw > 1.0 / mode.kappa) ++violated;
            }
        }
    }
    if (monitored == 0) throw ValidationError("monitored band contains no grid points");
    st.band_report.kappa = mode.kappa;
    st.band_report.min_val = bmin;
    st.band_report.max_val = bmax;
    st.band_report.band = band;
    st.band_report.violated_fraction = static_cast<double>(violated) / static_cast<double>(monitored);
    st.band_report.pass = (bmin >= mode.kappa && bmax <= 1.0 / mode.kappa);
    st.wmin = st.effective.values()[0];
    st.wmax = st.effective.values()[0];
    for (double wv : st.effective.values()) {
        st.wmin = std::min(st.wmin, wv);
        st.wmax = std::max(st.wmax, wv);
    }
    return st;
}

/// The weighted top term |d_x^s f / sqrt(weight)|^2 by grid quadrature,
/// plus the unweighted remainder sum_{alpha != (s,0)} |D^alpha f|^2.
inline NormReport weighted_core(const SpectralField& f, const SpectralField& weight_source, int s,
                                const WeightMode& mode, const ZBand& band, NormKind kind) {
    validate_s(s);
    f.require_same_grid(weight_source);
    WeightStats st = weight_field(weight_source, mode, band);
    if (mode.kind == WeightMode::Kind::Strict && st.band_report.min_val < mode.kappa)
        throw RayleighViolation("weighted norm (strict): shear below kappa on the monitored band", st.band_report);

    const auto& tables = detail::order_tables(f.grid(), s);
    NormReport r;
    r.kind = kind;
    r.s = s;
    r.weight_mode = mode.name();

    double unweighted = 0.0;
    const auto& c = f.coeffs();
    for (int j = 0; j <= s; ++j) {
        const auto& tab = tables[static_cast<size_t>(j)];
        for (size_t i = 0; i < c.size(); ++i) unweighted += tab[i] * std::norm(c[i]);
    }
    // subtract the pure-x top-order term k1^{2s} |c|^2
    double top_sq = 0.0;
    f.for_each_mode([&](int m1, int, size_t idx) {
        double p = 1.0;
        const double k1sq = (two_pi * m1) * (two_pi * m1);
        for (int a = 0; a < s; ++a) p *= k1sq;
        top_sq += p * std::norm(c[idx]);
    });
    unweighted -= top_sq;

    const PhysicalField top = inverse_transform(derivative(f, 0, s));
    double weighted_sq = 0.0, top_grid_sq = 0.0;
    for (size_t i = 0; i < top.values().size(); ++i) {
        const double t2 = top.values()[i] * top.values()[i];
        weighted_sq += t2 / st.effective.values()[i];
        top_grid_sq += t2;
    }
    weighted_sq /= static_cast<double>(f.grid().size());
    top_grid_sq /= static_cast<double>(f.grid().size());

    r.components["unweighted_sq"] = unweighted;
    r.components["weighted_sq"] = weighted_sq;
    r.components["top_x_unweighted_sq"] = top_sq;
    r.components["top_x_grid_sq"] = top_grid_sq;
    r.components["weight_min"] = st.wmin;
    r.components["weight_max"] = st.wmax;
    r.components["band_min"] = st.band_report.min_val;
    r.components["band_max"] = st.band_report.max_val;
    r.value = std::sqrt(unweighted + weighted_sq);
    return r;
}

}  // namespace detail

/// Shear-weighted H^s norm of f, weight from f's own vertical derivative.
inline NormReport weighted_hs_norm(const SpectralField& f, int s, const WeightMode& mode,
                                   const ZBand& band = ZBand{}) {
    return detail::weighted_core(f, f, s, mode, band, NormKind::HsWeighted);
}

/// Same structure, but the weight comes from a reference field's shear;
/// used for difference estimates between two states.
inline NormReport cross_weighted_norm(const SpectralField& d, const SpectralField& v_ref, int s,
                                      const WeightMode& mode, const ZBand& band = ZBand{}) {
    return detail::weighted_core(d, v_ref, s, mode, band, NormKind::CrossWeighted);
}

/// |u| + |d_z u|_{H^s} (the drift-control norm on D_s).
inline NormReport ds_norm(const SpectralField& u, int s) {
    validate_s(s);
    NormReport shear = hs_norm(derivative(u, 1, 1), s);
    NormReport r;
    r.kind = NormKind::Ds;
    r.s = s;
    r.components["l2"] = l2_norm(u);
    r.components["shear_hs"] = shear.value;
    r.value = r.components["l2"] + shear.value;
    return r;
}

/// |u| + |d_z u|_{H~^s}, the weighted counterpart on D_{s,kappa}.
inline NormReport dskappa_norm(const SpectralField& u, int s, const WeightMode& mode,
                               const ZBand& band = ZBand{}) {
    validate_s(s);
    NormReport shear = detail::weighted_core(derivative(u, 1, 1), derivative(u, 1, 1), s, mode,
                                             band, NormKind::HsWeighted);
    NormReport r;
    r.kind = NormKind::DsKappa;
    r.s = s;
    r.weight_mode = mode.name();
    r.components["l2"] = l2_norm(u);
    r.components["shear_weighted"] = shear.value;
    r.components["weight_min"] = shear.components["weight_min"];
    r.components["weight_max"] = shear.components["weight_max"];
    r.value = r.components["l2"] + shear.value;
    return r;
}

/// Check kappa <= d_zz u <= 1/kappa on the monitored band.
inline RayleighReport rayleigh_monitor(const SpectralField& u, double kappa, const ZBand& band = ZBand{}) {
    if (!(kappa > 0.0 && kappa < 0.5)) throw ValidationError("rayleigh monitor needs kappa in (0, 1/2)");
    validate_band(band);
    const PhysicalField curv = inverse_transform(derivative(u, 1, 2));
    const GridShape g = curv.grid();
    RayleighReport rep;
    rep.kappa = kappa;
    rep.band = band;
    bool first = true;
    size_t monitored = 0, violated = 0;
    for (int ix = 0; ix < g.nx; ++ix) {
        for (int iz = 0; iz < g.nz; ++iz) {
            if (!band.contains(curv.z_of(iz))) continue;
            const double val = curv.at(ix, iz);
            ++monitored;
            if (first) {
                rep.min_val = rep.max_val = val;
                first = false;
            } else {
                rep.min_val = std::min(rep.min_val, val);
                rep.max_val = std::max(rep.max_val, val);
            }
            if (val < kappa || val > 1.0 / kappa) ++violated;
        }
    }
    if (monitored == 0) throw ValidationError("monitored band contains no grid points");
    rep.violated_fraction = static_cast<double>(violated) / static_cast<double>(monitored);
    rep.pass = (rep.min_val >= kappa && rep.max_val <= 1.0 / kappa);
    return rep;
}

inline RayleighReport rayleigh_monitor(const VelocityState& s, double kappa, const ZBand& band = ZBand{}) {
    return rayleigh_monitor(s.u(), kappa, band);
}

/// Grid maximum of |f - g| (a lower bound for the true sup over the torus).
inline double linf_distance(const SpectralField& f, const SpectralField& g) {
    f.require_same_grid(g);
    const PhysicalField d = inverse_transform(f - g);
    return d.max_abs();
}

inline double linf_norm(const SpectralField& f) { return inverse_transform(f).max_abs(); }

}  // namespace hspe
