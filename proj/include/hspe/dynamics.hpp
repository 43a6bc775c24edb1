#pragma once

// Drift/diffusion assembly for the four cut-off systems and the
// Euler--Maruyama loop with stopping detection.
//
// All variants share
//
//   du = -theta_rho(|u|_{D,s~}) theta_k(|dzz u - dzz u0|_inf)
//          [ P_H(u dx u + w dz u) + Lambda u ] dt
//        + theta_rho theta_k P_H sigma(u) dW
//
// and differ only in the nonnegative linear symbol Lambda(k):
//
//   euler_modified   0
//   euler_approx     (1/n) |k|^2
//   nse_modified     nu k2^2
//   nse_approx       nu k2^2 + (1/n) k1^2
//
// The cut-offs multiply the linear term too, so a path with theta = 0 is
// bitwise frozen: no drift, no diffusion, no semigroup.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hspe/errors.hpp"
#include "hspe/field.hpp"
#include "hspe/fields.hpp"
#include "hspe/norms.hpp"
#include "hspe/regularize.hpp"
#include "hspe/rng.hpp"
#include "hspe/stochastic.hpp"

namespace hspe {

enum class Variant { EulerModified, EulerApprox, NseModified, NseApprox };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::EulerModified: return "euler_modified";
        case Variant::EulerApprox: return "euler_approx";
        case Variant::NseModified: return "nse_modified";
        default: return "nse_approx";
    }
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "euler_modified") return Variant::EulerModified;
    if (s == "euler_approx") return Variant::EulerApprox;
    if (s == "nse_modified") return Variant::NseModified;
    if (s == "nse_approx") return Variant::NseApprox;
    throw ValidationError("unknown variant: " + s);
}

inline bool is_nse(Variant v) { return v == Variant::NseModified || v == Variant::NseApprox; }
inline bool is_approx(Variant v) { return v == Variant::EulerApprox || v == Variant::NseApprox; }

enum class LinearTreatment { Auto, Explicit, Exponential };

inline const char* to_string(LinearTreatment t) {
    switch (t) {
        case LinearTreatment::Explicit: return "explicit";
        case LinearTreatment::Exponential: return "exponential";
        default: return "auto";
    }
}

inline LinearTreatment treatment_from_string(const std::string& s) {
    if (s == "explicit") return LinearTreatment::Explicit;
    if (s == "exponential") return LinearTreatment::Exponential;
    if (s == "auto") return LinearTreatment::Auto;
    throw ValidationError("unknown linear treatment: " + s);
}

struct SimConfig {
    Variant variant = Variant::EulerModified;
    double nu = 0.0;    // viscosity; must be 0 for Euler variants, > 0 for NSE
    int n_visc = 1;     // the n of the 1/n artificial dissipation (approx variants)
    double rho = 1.0;   // norm cut-off radius
    double kappa = 0.2; // Rayleigh parameter, in (0, 1/2)
    int s = 6;          // smoothness index (>= 7 for NSE variants)
    int cutoff_norm_index = 0;  // 0 = derive: s-1 (Euler) or s-2 (NSE)
    double dt = 1e-3;
    double T = 1.0;
    GridShape grid{64, 64};
    uint64_t seed = 0;
    uint64_t stream = 0;  // path index; ensembles give each path its own
    LinearTreatment linear_treatment = LinearTreatment::Auto;
    CutoffFamily cutoff_family = CutoffFamily::QuinticPolynomial;
    ZBand band{};
    bool halt_on_stop = false;  // stop integrating once the stopping time fires
    bool debug_checks = false;  // revalidate invariants every step
    int snapshot_stride = 0;    // steps between stored states; 0 = none
    double h_tol = 1e-10;

    int expected_cutoff_index() const { return is_nse(variant) ? s - 2 : s - 1; }

    /// Copy with derived fields made concrete (cutoff index, treatment).
    SimConfig resolved() const {
        SimConfig c = *this;
        if (c.cutoff_norm_index == 0) c.cutoff_norm_index = c.expected_cutoff_index();
        if (c.linear_treatment == LinearTreatment::Auto)
            c.linear_treatment = c.variant == Variant::EulerModified ? LinearTreatment::Explicit
                                                                     : LinearTreatment::Exponential;
        return c;
    }

    void validate() const;
};

/// Effective dissipation coefficient: nu for NSE plus 1/n for approx variants.
inline double effective_viscosity(const SimConfig& c) {
    double nu_eff = is_nse(c.variant) ? c.nu : 0.0;
    if (is_approx(c.variant)) nu_eff += 1.0 / static_cast<double>(c.n_visc);
    return nu_eff;
}

/// Largest admissible explicit time step, 0.5 / (nu_eff k_max^2); infinity
/// when there is no linear term.
inline double stability_budget(const SimConfig& c) {
    const double nu_eff = effective_viscosity(c);
    if (nu_eff <= 0.0) return std::numeric_limits<double>::infinity();
    const int m_max = std::max(dealias_limit(c.grid.nx), dealias_limit(c.grid.nz));
    const double k_max = two_pi * m_max;
    return 0.5 / (nu_eff * k_max * k_max);
}

inline double lambda_symbol(const SimConfig& c, int m1, int m2) {
    const double k1 = two_pi * m1, k2 = two_pi * m2;
    switch (c.variant) {
        case Variant::EulerModified: return 0.0;
        case Variant::EulerApprox: return (k1 * k1 + k2 * k2) / static_cast<double>(c.n_visc);
        case Variant::NseModified: return c.nu * k2 * k2;
        default: return c.nu * k2 * k2 + k1 * k1 / static_cast<double>(c.n_visc);
    }
}

inline void SimConfig::validate() const {
    validate_grid(grid);
    validate_band(band);
    if (s < 6) throw ValidationError("smoothness index s must be at least 6");
    if (is_nse(variant) && s < 7) throw ValidationError("NSE variants need s >= 7");
    validate_s(s);
    if (cutoff_norm_index != expected_cutoff_index())
        throw ValidationError("cutoff norm index must be s-1 for Euler variants and s-2 for NSE (got " +
                              std::to_string(cutoff_norm_index) + ", expected " +
                              std::to_string(expected_cutoff_index()) + ")");
    if (!(kappa > 0.0 && kappa < 0.5)) throw ValidationError("kappa must lie in (0, 1/2)");
    if (!(rho > 0.0)) throw ValidationError("cut-off radius rho must be positive");
    if (!(dt > 0.0)) throw ValidationError("time step dt must be positive");
    if (!(T >= 0.0)) throw ValidationError("horizon T must be nonnegative");
    if (is_nse(variant)) {
        if (!(nu > 0.0)) throw ValidationError("NSE variants need nu > 0");
    } else if (nu != 0.0) {
        throw ValidationError("Euler variants force nu = 0");
    }
    if (is_approx(variant) && n_visc < 1)
        throw ValidationError("approx variants need a positive integer n_visc");
    if (linear_treatment == LinearTreatment::Auto)
        throw ValidationError("linear treatment is unresolved; call resolved() first");
    if (snapshot_stride < 0) throw ValidationError("snapshot stride must be nonnegative");
    if (!(h_tol > 0.0)) throw ValidationError("H-membership tolerance must be positive");
    if (linear_treatment == LinearTreatment::Explicit) {
        const double budget = stability_budget(*this);
        if (dt > budget)
            throw ValidationError("dt = " + std::to_string(dt) +
                                  " exceeds the explicit stability budget 0.5/(nu_eff k_max^2) = " +
                                  std::to_string(budget) + "; shrink dt or use the exponential treatment");
    }
}

/// Cut-off factors at one state, with the quantities they were evaluated on.
struct StepThetas {
    NormReport ds;       // drift-control norm at the cut-off index
    double dev = 0.0;    // |dzz u - dzz u0|_inf (grid max)
    double theta_rho = 1.0;
    double theta_kappa = 1.0;
    double product() const { return theta_rho * theta_kappa; }
};

inline StepThetas compute_thetas(const VelocityState& state, const VelocityState& u0_state,
                                 const SimConfig& cfg) {
    StepThetas th;
    th.ds = ds_norm(state.u(), cfg.cutoff_norm_index);
    th.dev = linf_distance(derivative(state.u(), 1, 2), derivative(u0_state.u(), 1, 2));
    th.theta_rho = theta(CutoffSpec{cfg.rho, cfg.cutoff_family}, th.ds.value);
    th.theta_kappa = theta(CutoffSpec{cfg.kappa, cfg.cutoff_family}, th.dev);
    return th;
}

namespace detail {

inline void require_in_h(const SpectralField& u, double h_tol, const char* where) {
    const double defect = h_defect(u);
    if (defect > h_tol * std::max(1.0, u.max_abs_coeff()))
        throw NumericalError(std::string(where) + ": state leaves H (defect " +
                             std::to_string(defect) + ")");
}

/// P_H(u dx u + w dz u): both products dealiased, result even and in H.
inline SpectralField nonlinear_term(const VelocityState& state) {
    const SpectralField& u = state.u();
    SpectralField nl = product(u, derivative(u, 0, 1)) + product(state.w(), derivative(u, 1, 1));
    return project_to_h(nl);
}

/// nl + Lambda u, scaled by -theta.
inline SpectralField drift_from(const SpectralField& nl, const SpectralField& u,
                                const SimConfig& cfg, double theta_product) {
    SpectralField out = nl;
    out.for_each_mode([&](int m1, int m2, size_t idx) {
        out.coeffs()[idx] += lambda_symbol(cfg, m1, m2) * u.coeffs()[idx];
    });
    out *= -theta_product;
    return out;
}

}  // namespace detail

/// Full drift of the modified system at one state (cut-offs included).
inline SpectralField drift(const VelocityState& state, const VelocityState& u0_state,
                           const SimConfig& cfg_in, const StepThetas* precomputed = nullptr) {
    const SimConfig cfg = cfg_in.resolved();
    detail::require_in_h(state.u(), cfg.h_tol, "drift");
    const StepThetas th = precomputed ? *precomputed : compute_thetas(state, u0_state, cfg);
    if (th.product() == 0.0) return SpectralField(state.grid(), Parity::Even);
    return detail::drift_from(detail::nonlinear_term(state), state.u(), cfg, th.product());
}

/// Cut-off-scaled, H-projected noise term for one increment.
inline SpectralField diffusion(const VelocityState& state, const VelocityState& u0_state,
                               const WienerIncrement& inc, const NoiseModel& model,
                               const SimConfig& cfg_in, const StepThetas* precomputed = nullptr) {
    const SimConfig cfg = cfg_in.resolved();
    detail::require_in_h(state.u(), cfg.h_tol, "diffusion");
    const StepThetas th = precomputed ? *precomputed : compute_thetas(state, u0_state, cfg);
    if (th.product() == 0.0) return SpectralField(state.grid(), Parity::Even);
    SpectralField out = project_to_h(apply_noise(state.u(), model, inc));
    out *= th.product();
    return out;
}

struct EmStep {
    VelocityState next;
    StepThetas thetas;
    WienerIncrement increment;
};

namespace detail {

/// One Euler--Maruyama step with the cut-offs already evaluated at `state`.
/// The increment must already be drawn (so frozen paths consume randomness
/// exactly like live ones).
inline VelocityState advance(const VelocityState& state, const VelocityState& u0_state,
                             const SimConfig& cfg, const NoiseModel& model,
                             const WienerIncrement& inc, const StepThetas& th, double new_time) {
    const double tp = th.product();
    if (tp == 0.0) return VelocityState::from_u(state.u(), new_time, cfg.h_tol);

    SpectralField unew = state.u();
    const SpectralField nl = nonlinear_term(state);
    const SpectralField noise = diffusion(state, u0_state, inc, model, cfg, &th);
    if (cfg.linear_treatment == LinearTreatment::Explicit) {
        unew += (cfg.dt) * drift_from(nl, state.u(), cfg, tp);
        unew += noise;
    } else {
        // Integrate the linear part exactly: apply the cut-off semigroup
        // e^{-theta Lambda dt} to the nonlinearly/noise-updated state.
        unew += (-cfg.dt * tp) * nl;
        unew += noise;
        unew.for_each_mode([&](int m1, int m2, size_t idx) {
            const double lam = lambda_symbol(cfg, m1, m2);
            if (lam != 0.0) unew.coeffs()[idx] *= std::exp(-tp * lam * cfg.dt);
        });
    }
    unew = project_to_h(unew);
    unew.enforce();
    if (!unew.all_finite())
        throw NumericalError("non-finite state produced near t = " + std::to_string(new_time));
    return VelocityState::from_u(unew, new_time, cfg.h_tol);
}

}  // namespace detail

/// One explicit step: draws the increment from `rng`, evaluates the cut-offs
/// at `state`, and advances by dt.
inline EmStep em_step(const VelocityState& state, const VelocityState& u0_state,
                      const SimConfig& cfg_in, const NoiseModel& model, CounterRng& rng) {
    const SimConfig cfg = cfg_in.resolved();
    cfg.validate();
    EmStep out;
    out.increment = sample_increment(rng, model.K(), cfg.dt);
    out.thetas = compute_thetas(state, u0_state, cfg);
    out.next = detail::advance(state, u0_state, cfg, model, out.increment, out.thetas,
                               state.time() + cfg.dt);
    return out;
}

struct StoppingEvent {
    enum class Cause { NormThreshold, RayleighDrift, Horizon };
    double time = 0.0;
    Cause cause = Cause::Horizon;
    double value_at_trigger = 0.0;
};

inline const char* to_string(StoppingEvent::Cause c) {
    switch (c) {
        case StoppingEvent::Cause::NormThreshold: return "norm_threshold";
        case StoppingEvent::Cause::RayleighDrift: return "rayleigh_drift";
        default: return "horizon";
    }
}

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<NormReport> norm_series;  // drift-control norm at the cut-off index
    std::vector<double> dev_series;       // theta_kappa argument
    std::vector<std::pair<double, double>> cutoff_series;  // (theta_rho, theta_kappa)
    std::vector<RayleighReport> rayleigh_series;
    std::optional<StoppingEvent> stopping;
    std::vector<VelocityState> snapshots;
    uint64_t seed = 0;
    uint64_t stream = 0;
    SimConfig config;
    std::vector<std::string> warnings;

    size_t size() const { return times.size(); }
};

/// eta: thresholds rho/2 on the control norm and kappa/2 on the curvature
/// deviation.  tau_jT: thresholds 2 + |u0|_{s~} and kappa/4, capped at T.
enum class StoppingFlavor { Eta, TauJT };

namespace detail {

inline std::optional<StoppingEvent> first_crossing(const TrajectoryRecord& rec, const SimConfig& cfg,
                                                   StoppingFlavor flavor) {
    const double th_norm = flavor == StoppingFlavor::Eta ? 0.5 * cfg.rho
                                                         : 2.0 + rec.norm_series.front().value;
    const double th_dev = flavor == StoppingFlavor::Eta ? 0.5 * cfg.kappa : 0.25 * cfg.kappa;
    for (size_t i = 0; i < rec.size(); ++i) {
        if (flavor == StoppingFlavor::TauJT && rec.times[i] > cfg.T) break;
        if (rec.norm_series[i].value >= th_norm)
            return StoppingEvent{rec.times[i], StoppingEvent::Cause::NormThreshold,
                                 rec.norm_series[i].value};
        if (rec.dev_series[i] >= th_dev)
            return StoppingEvent{rec.times[i], StoppingEvent::Cause::RayleighDrift,
                                 rec.dev_series[i]};
    }
    return std::nullopt;
}

}  // namespace detail

/// First discrete crossing of the flavor's thresholds; horizon event at the
/// last recorded time (capped at T for tau_jT) when nothing crosses.
inline std::optional<StoppingEvent> detect_stopping(const TrajectoryRecord& rec,
                                                    const SimConfig& cfg_in, StoppingFlavor flavor) {
    if (rec.times.empty()) throw ValidationError("stopping detection needs a nonempty record");
    if (rec.norm_series.size() != rec.size() || rec.dev_series.size() != rec.size())
        throw ValidationError("stopping detection: series lengths disagree");
    const SimConfig cfg = cfg_in.resolved();
    if (auto ev = detail::first_crossing(rec, cfg, flavor)) return ev;
    const double t_end = flavor == StoppingFlavor::TauJT ? std::min(rec.times.back(), cfg.T)
                                                         : rec.times.back();
    return StoppingEvent{t_end, StoppingEvent::Cause::Horizon, rec.norm_series.back().value};
}

/// Integrate one path to the horizon.  The stopping time (eta flavor) is
/// recorded when it fires but the path keeps evolving to T unless
/// halt_on_stop is set; with the cut-offs at zero the state is bitwise
/// frozen anyway.  Deterministic given (seed, stream, config, model, initial).
inline TrajectoryRecord simulate(const SimConfig& cfg_in, const NoiseModel& model,
                                 const VelocityState& initial) {
    const SimConfig cfg = cfg_in.resolved();
    cfg.validate();
    if (!(model.grid() == cfg.grid))
        throw ValidationError("noise model grid does not match the configured grid");
    if (!(initial.grid() == cfg.grid))
        throw ValidationError("initial state grid does not match the configured grid");

    TrajectoryRecord rec;
    rec.config = cfg;
    rec.seed = cfg.seed;
    rec.stream = cfg.stream;

    // Advisory only: the well-posedness setting wants the initial curvature
    // inside the doubled window [2 kappa, 1/(2 kappa)] on the monitored band.
    try {
        const RayleighReport r0 = rayleigh_monitor(initial.u(), 2.0 * cfg.kappa, cfg.band);
        if (!r0.pass)
            rec.warnings.push_back(
                "initial curvature leaves [2k, 1/(2k)] on the monitored band (min " +
                std::to_string(r0.min_val) + ", max " + std::to_string(r0.max_val) + ")");
    } catch (const ValidationError& e) {
        rec.warnings.push_back(std::string("initial window check skipped: ") + e.what());
    }

    long n_steps = 0;
    if (cfg.T > 0.0) {
        n_steps = std::lround(cfg.T / cfg.dt);
        if (n_steps < 1 || std::abs(static_cast<double>(n_steps) * cfg.dt - cfg.T) >
                               1e-9 * std::max(1.0, cfg.T))
            throw ValidationError("horizon T must be an integer number of dt steps");
    } else {
        rec.stopping = StoppingEvent{initial.time(), StoppingEvent::Cause::Horizon,
                                     ds_norm(initial.u(), cfg.cutoff_norm_index).value};
        return rec;
    }

    CounterRng rng(cfg.seed, cfg.stream);
    VelocityState cur = initial;
    const double t0 = initial.time();

    auto record_state = [&](const VelocityState& st, const StepThetas& th) {
        rec.times.push_back(st.time());
        rec.norm_series.push_back(th.ds);
        rec.dev_series.push_back(th.dev);
        rec.cutoff_series.emplace_back(th.theta_rho, th.theta_kappa);
        rec.rayleigh_series.push_back(rayleigh_monitor(st.u(), cfg.kappa, cfg.band));
        if (!rec.stopping)
            if (auto ev = detail::first_crossing(rec, cfg, StoppingFlavor::Eta)) rec.stopping = ev;
    };
    auto debug_validate = [&](const VelocityState& st) {
        if (!cfg.debug_checks) return;
        if (st.u().parity() != Parity::Even) throw NumericalError("debug: parity tag lost");
        if (st.u().reality_residual() != 0.0) throw NumericalError("debug: reality violated");
        if (st.u().dealias_residual() != 0.0) throw NumericalError("debug: dealias band violated");
        detail::require_in_h(st.u(), cfg.h_tol, "debug");
    };

    StepThetas th = compute_thetas(cur, initial, cfg);
    record_state(cur, th);
    if (cfg.snapshot_stride > 0) rec.snapshots.push_back(cur);
    debug_validate(cur);

    for (long i = 1; i <= n_steps; ++i) {
        if (rec.stopping && cfg.halt_on_stop) break;
        const WienerIncrement inc = sample_increment(rng, model.K(), cfg.dt);
        cur = detail::advance(cur, initial, cfg, model, inc, th, t0 + cfg.dt * static_cast<double>(i));
        th = compute_thetas(cur, initial, cfg);
        record_state(cur, th);
        debug_validate(cur);
        if (cfg.snapshot_stride > 0 &&
            (i % cfg.snapshot_stride == 0 || i == n_steps))
            rec.snapshots.push_back(cur);
    }

    if (!rec.stopping)
        rec.stopping = StoppingEvent{rec.times.back(), StoppingEvent::Cause::Horizon,
                                     rec.norm_series.back().value};
    return rec;
}

}  // namespace hspe
