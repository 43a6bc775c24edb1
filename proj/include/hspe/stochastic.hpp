#pragma once

// Multiplicative noise sigma(u) dW = sum_k dW^k (psi_k u + chi_k).
//
// Coefficient fields psi_k, chi_k are even band-limited trigonometric modes.
// The model's kappa_1, kappa_2 are *measured* envelopes: after construction
// sum_k |psi_k|_{W^{r,inf}}^2 = kappa_1^2 holds with r = s + 1 evaluated by
// grid maxima over all derivative classes, which is the quantity the noise
// inequalities are checked against.

#include <cmath>
#include <string>
#include <vector>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"
#include "hspe/fields.hpp"
#include "hspe/norms.hpp"
#include "hspe/initial_data.hpp"
#include "hspe/rng.hpp"

namespace hspe {

/// One trigonometric coefficient field: amp * fx(2 pi p x) * cos(2 pi q z),
/// where fx is cos (sin_x = false) or sin.  Always even in z.
struct NoiseModeSpec {
    int p = 0;
    int q = 0;
    bool sin_x = false;
    double amp = 0.0;
};

/// Exact coefficient placement for a NoiseModeSpec (no transforms involved).
inline SpectralField build_trig_field(GridShape g, const NoiseModeSpec& spec) {
    SpectralField f(g, Parity::Even);
    if (spec.amp == 0.0) return f;
    if (std::abs(spec.p) > f.max_mode_x() || std::abs(spec.q) > f.max_mode_z())
        throw ValidationError("noise mode outside the dealias band");
    if (spec.sin_x && spec.p == 0) throw ValidationError("sin(0 x) noise mode is identically zero");
    struct Part {
        int m;
        cd c;
    };
    std::vector<Part> xs, zs;
    if (spec.p == 0) {
        xs.push_back({0, cd{1.0, 0.0}});
    } else if (spec.sin_x) {
        xs.push_back({spec.p, cd{0.0, -0.5}});
        xs.push_back({-spec.p, cd{0.0, 0.5}});
    } else {
        xs.push_back({spec.p, cd{0.5, 0.0}});
        xs.push_back({-spec.p, cd{0.5, 0.0}});
    }
    if (spec.q == 0) {
        zs.push_back({0, cd{1.0, 0.0}});
    } else {
        zs.push_back({spec.q, cd{0.5, 0.0}});
        zs.push_back({-spec.q, cd{0.5, 0.0}});
    }
    for (const Part& a : xs)
        for (const Part& b : zs) f.set_coeff(a.m, b.m, spec.amp * a.c * b.c);
    f.enforce();
    return f;
}

/// Grid-measured W^{order,inf} norm: max over |alpha| <= order of sup |D^alpha f|.
inline double wk_inf_norm(const SpectralField& f, int order) {
    double best = 0.0;
    for (int a = 0; a <= order; ++a) {
        SpectralField dx = derivative(f, 0, a);
        for (int b = 0; a + b <= order; ++b) {
            const SpectralField d = derivative(dx, 1, b);
            best = std::max(best, inverse_transform(d).max_abs());
        }
    }
    return best;
}

class NoiseModel {
  public:
    NoiseModel() = default;

    /// Build from explicit mode specs; amplitudes are taken as given.
    NoiseModel(GridShape g, std::vector<NoiseModeSpec> psi, std::vector<NoiseModeSpec> chi,
               int smooth_order)
        : grid_(g), psi_specs_(std::move(psi)), chi_specs_(std::move(chi)), smooth_order_(smooth_order) {
        if (psi_specs_.size() != chi_specs_.size())
            throw ValidationError("noise model: psi/chi lists must pair up");
        for (const auto& spec : psi_specs_) psi_.push_back(build_trig_field(g, spec));
        for (const auto& spec : chi_specs_) chi_.push_back(build_trig_field(g, spec));
        measure();
    }

    /// K low-mode pairs with amplitudes (1+k)^{-2}, rescaled so the measured
    /// W^{s+1,inf} envelopes hit kappa1 (psi) and kappa2 (chi) exactly.
    static NoiseModel make_default(GridShape g, int K = 16, int s = 6, double kappa1 = 1.0,
                                   double kappa2 = 1.0) {
        if (K < 1) throw ValidationError("default noise model needs K >= 1");
        static constexpr int pat[][2] = {{0, 1}, {1, 0}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}, {2, 2},
                                         {3, 0}, {0, 3}, {3, 1}, {1, 3}, {3, 2}, {2, 3}, {3, 3}, {4, 1}};
        constexpr int npat = static_cast<int>(sizeof(pat) / sizeof(pat[0]));
        std::vector<NoiseModeSpec> psi, chi;
        for (int k = 0; k < K; ++k) {
            const auto& pp = pat[k % npat];
            const auto& pc = pat[(k + 5) % npat];
            const double amp = 1.0 / ((1.0 + k) * (1.0 + k));
            psi.push_back({pp[0], pp[1], pp[0] != 0 && (k % 2 == 1), amp});
            chi.push_back({pc[0], pc[1], pc[0] != 0 && (k % 3 == 1), amp});
        }
        NoiseModel m(g, std::move(psi), std::move(chi), s + 1);
        m.rescale(kappa1, kappa2);
        return m;
    }

    /// Pure additive model: psi = 0, chi given.
    static NoiseModel make_additive(GridShape g, std::vector<NoiseModeSpec> chi, int smooth_order = 7) {
        std::vector<NoiseModeSpec> psi(chi.size());
        return NoiseModel(g, std::move(psi), std::move(chi), smooth_order);
    }

    /// Single scalar multiplicative mode: sigma(u) dW = c u dW.
    static NoiseModel make_scalar(GridShape g, double c, int smooth_order = 7) {
        std::vector<NoiseModeSpec> psi{NoiseModeSpec{0, 0, false, c}};
        std::vector<NoiseModeSpec> chi{NoiseModeSpec{}};
        return NoiseModel(g, std::move(psi), std::move(chi), smooth_order);
    }

    static NoiseModel zero(GridShape g) { return NoiseModel(g, {}, {}, 7); }

    int K() const { return static_cast<int>(psi_.size()); }
    const GridShape& grid() const { return grid_; }
    const std::vector<SpectralField>& psi() const { return psi_; }
    const std::vector<SpectralField>& chi() const { return chi_; }
    const std::vector<NoiseModeSpec>& psi_specs() const { return psi_specs_; }
    const std::vector<NoiseModeSpec>& chi_specs() const { return chi_specs_; }
    double kappa1() const { return kappa1_; }
    double kappa2() const { return kappa2_; }
    int smooth_order() const { return smooth_order_; }

    /// Scale both families so the measured envelopes match the targets.
    void rescale(double kappa1, double kappa2) {
        if (kappa1_ > 0.0) {
            const double a = kappa1 / kappa1_;
            for (size_t i = 0; i < psi_.size(); ++i) {
                psi_[i] *= a;
                psi_specs_[i].amp *= a;
            }
        }
        if (kappa2_ > 0.0) {
            const double a = kappa2 / kappa2_;
            for (size_t i = 0; i < chi_.size(); ++i) {
                chi_[i] *= a;
                chi_specs_[i].amp *= a;
            }
        }
        measure();
    }

  private:
    void measure() {
        double s1 = 0.0, s2 = 0.0;
        for (const auto& f : psi_) {
            const double n = wk_inf_norm(f, smooth_order_);
            s1 += n * n;
        }
        for (const auto& f : chi_) {
            const double n = wk_inf_norm(f, smooth_order_);
            s2 += n * n;
        }
        kappa1_ = std::sqrt(s1);
        kappa2_ = std::sqrt(s2);
    }

    GridShape grid_{};
    std::vector<NoiseModeSpec> psi_specs_, chi_specs_;
    std::vector<SpectralField> psi_, chi_;
    double kappa1_ = 0.0, kappa2_ = 0.0;
    int smooth_order_ = 7;
};

/// One batch of Wiener increments dW^k ~ N(0, dt), with the stream state
/// that produced it (enough to replay the draw).
struct WienerIncrement {
    std::vector<double> dw;
    double dt = 0.0;
    uint64_t seed = 0;
    uint64_t stream = 0;
    uint64_t counter0 = 0;
};

inline WienerIncrement sample_increment(CounterRng& rng, int K, double dt) {
    if (!(dt > 0.0)) throw ValidationError("wiener increment needs dt > 0");
    if (K < 0) throw ValidationError("wiener increment needs K >= 0");
    WienerIncrement inc;
    inc.dt = dt;
    inc.seed = rng.seed();
    inc.stream = rng.stream();
    inc.counter0 = rng.counter();
    inc.dw.resize(static_cast<size_t>(K));
    const double root_dt = std::sqrt(dt);
    for (int k = 0; k < K; ++k) inc.dw[static_cast<size_t>(k)] = root_dt * rng.normal();
    return inc;
}

/// sigma(u) applied to one increment:
///   sum_k dW^k (psi_k u + chi_k) = (sum_k dW^k psi_k) u + sum_k dW^k chi_k,
/// with the single dealiased product on the right.  Affine in u; even in z.
inline SpectralField apply_noise(const SpectralField& u, const NoiseModel& m,
                                 const WienerIncrement& inc) {
    if (u.parity() != Parity::Even)
        throw ValidationError("apply_noise: state must be even in z");
    u.require_same_grid(SpectralField(m.grid(), Parity::Even));
    if (static_cast<int>(inc.dw.size()) != m.K())
        throw ValidationError("apply_noise: increment size does not match mode count");
    SpectralField slope(u.grid(), Parity::Even), offset(u.grid(), Parity::Even);
    bool any_slope = false;
    for (int k = 0; k < m.K(); ++k) {
        const double w = inc.dw[static_cast<size_t>(k)];
        if (w == 0.0) continue;
        const auto& pc = m.psi()[static_cast<size_t>(k)].coeffs();
        const auto& cc = m.chi()[static_cast<size_t>(k)].coeffs();
        for (size_t i = 0; i < slope.coeffs().size(); ++i) {
            slope.coeffs()[i] += w * pc[i];
            offset.coeffs()[i] += w * cc[i];
        }
        any_slope = any_slope || l2_norm(m.psi()[static_cast<size_t>(k)]) > 0.0;
    }
    if (!any_slope) return offset;
    return product(slope, u) + offset;
}

/// Measured constants of the four noise inequalities over random draws in H:
///   |sigma(u)|_{L2(U,L2)}           <= C (1 + |u|)
///   max_a |D^a dz sigma(u)|_{L2(U)} <= C (1 + |u|_s)        (|a| <= s)
///   |sigma(u) - sigma(u')|          <= C |u - u'|
///   max_a |D^a dz (sigma(u)-sigma(u'))| <= C |u - u'|_s
/// where |.|_s is the drift-control norm |u| + |d_z u|_{H^s}.
struct NoiseBoundReport {
    double c_growth = 0.0;
    double c_deriv_growth = 0.0;
    double c_lipschitz = 0.0;
    double c_deriv_lipschitz = 0.0;
    double predicted = 0.0;  // 2 (kappa1 + kappa2)
    int samples = 0;
    bool pass = false;
    double max_c() const {
        return std::max(std::max(c_growth, c_deriv_growth), std::max(c_lipschitz, c_deriv_lipschitz));
    }
};

namespace detail {

/// sum over modes of m-multiplied |coeffs|^2 for D^alpha d_z, via Parseval.
inline double deriv_shear_norm_sq(const SpectralField& f, int a, int b) {
    double acc = 0.0;
    f.for_each_mode([&](int m1, int m2, size_t idx) {
        const double c2 = std::norm(f.coeffs()[idx]);
        if (c2 == 0.0) return;
        double mult = 1.0;
        const double k1 = two_pi * m1, k2 = two_pi * m2;
        for (int r = 0; r < a; ++r) mult *= k1 * k1;
        for (int r = 0; r < b + 1; ++r) mult *= k2 * k2;  // +1 for the d_z
        acc += mult * c2;
    });
    return acc;
}

}  // namespace detail

inline NoiseBoundReport verify_noise_bounds(const NoiseModel& m, int s, int n_samples,
                                            uint64_t seed) {
    validate_s(s);
    if (n_samples < 1) throw ValidationError("verify_noise_bounds needs at least one sample");
    NoiseBoundReport rep;
    rep.samples = n_samples;
    rep.predicted = 2.0 * (m.kappa1() + m.kappa2());
    const GridShape g = m.grid();
    for (int i = 0; i < n_samples; ++i) {
        const SpectralField u = random_h_field(g, 8, 3.0, seed, 0.5, static_cast<uint64_t>(2 * i));
        const SpectralField up = random_h_field(g, 8, 3.0, seed, 0.5, static_cast<uint64_t>(2 * i + 1));
        const SpectralField d = u - up;

        // One accumulator per derivative multi-index (a, b): the inequalities
        // take a max over indices of the per-index sum across noise modes.
        const size_t nidx = static_cast<size_t>((s + 1) * (s + 1));
        double growth_sq = 0.0, lips_sq = 0.0;
        std::vector<double> dgrow_sq(nidx, 0.0), dlips_sq(nidx, 0.0);
        for (int k = 0; k < m.K(); ++k) {
            const SpectralField& psi = m.psi()[static_cast<size_t>(k)];
            const SpectralField& chi = m.chi()[static_cast<size_t>(k)];
            const SpectralField pu = product(psi, u) + chi;
            const SpectralField pd = product(psi, d);
            growth_sq += l2_norm(pu) * l2_norm(pu);
            lips_sq += l2_norm(pd) * l2_norm(pd);
            for (int a = 0; a <= s; ++a)
                for (int b = 0; a + b <= s; ++b) {
                    const size_t at = static_cast<size_t>(a * (s + 1) + b);
                    dgrow_sq[at] += detail::deriv_shear_norm_sq(pu, a, b);
                    dlips_sq[at] += detail::deriv_shear_norm_sq(pd, a, b);
                }
        }
        const double den_u = 1.0 + l2_norm(u);
        const double den_us = 1.0 + ds_norm(u, s).value;
        const double den_d = l2_norm(d);
        const double den_ds = ds_norm(d, s).value;
        rep.c_growth = std::max(rep.c_growth, std::sqrt(growth_sq) / den_u);
        if (den_d > 0.0) rep.c_lipschitz = std::max(rep.c_lipschitz, std::sqrt(lips_sq) / den_d);
        for (int a = 0; a <= s; ++a)
            for (int b = 0; a + b <= s; ++b) {
                const size_t at = static_cast<size_t>(a * (s + 1) + b);
                rep.c_deriv_growth = std::max(rep.c_deriv_growth, std::sqrt(dgrow_sq[at]) / den_us);
                if (den_ds > 0.0)
                    rep.c_deriv_lipschitz =
                        std::max(rep.c_deriv_lipschitz, std::sqrt(dlips_sq[at]) / den_ds);
            }
    }
    rep.pass = rep.max_c() <= rep.predicted;
    return rep;
}

}  // namespace hspe
