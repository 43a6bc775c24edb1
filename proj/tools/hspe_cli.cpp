// Command-line driver: reads one key = value config file, runs a simulation
// or one of the batch experiments, and writes a run directory of artifacts
// (manifest.json, trajectory.ndjson, tables/*.csv, snapshots/*.bin).
//
// Exit codes: 0 success, 2 validation error (config grammar, unknown keys,
// parameter consistency), 3 numerical failure (non-finite artifact values,
// stability budget violations, failed certified properties).
//
// All compute may fan out across a worker pool, but every artifact byte is
// written from the main thread, in a fixed order, through io::write_file.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hspe/experiments.hpp"
#include "hspe/initial_data.hpp"
#include "hspe/io.hpp"

namespace fs = std::filesystem;
using namespace hspe;

namespace {

constexpr const char* out_root_env = "HSPE_OUT_ROOT";

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

// --- config schema ------------------------------------------------------------

io::ConfigSchema make_schema() {
    io::ConfigSchema s;
    s.allowed = {
        {"run",
         {"variant", "s", "nu", "n_visc", "rho", "kappa", "dt", "t_final", "seed", "stream",
          "linear_treatment", "cutoff_family", "cutoff_norm_index", "halt_on_stop", "debug_checks",
          "snapshot_stride", "h_tol", "band_lo", "band_hi"}},
        {"grid", {"nx", "nz"}},
        {"noise", {"model", "k", "smooth_order", "kappa1", "kappa2", "chi", "c"}},
        {"initial",
         {"kind", "kappa", "x_amp_rel", "seed", "stream", "x_band", "mode_cap", "band", "decay",
          "amplitude"}},
        {"experiment",
         {"ensemble_size", "ladder", "reference_radius", "m_bound", "delta", "p", "s_deriv",
          "projection", "samples", "radii", "orders"}},
    };
    s.required_sections = {"run", "grid"};
    s.required = {{"grid", {"nx", "nz"}}};
    return s;
}

io::Config load_config(const CliOptions& opts) {
    io::Config cfg = io::Config::load(opts.config_path);
    for (const auto& ov : opts.overrides) io::apply_override(cfg, ov);
    make_schema().check(cfg);
    return cfg;
}

// --- model assembly from config ------------------------------------------------

SimConfig sim_config_from(const io::Config& c, const CliOptions& opts) {
    SimConfig cfg;
    cfg.variant = variant_from_string(c.get_string("run", "variant", "euler_modified"));
    cfg.s = c.get_int("run", "s", 6);
    cfg.nu = c.get_double("run", "nu", 0.0);
    cfg.n_visc = c.get_int("run", "n_visc", 1);
    cfg.rho = c.get_double("run", "rho", 1.0);
    cfg.kappa = c.get_double("run", "kappa", 0.2);
    cfg.dt = c.get_double("run", "dt", 1e-3);
    cfg.T = c.get_double("run", "t_final", 1.0);
    cfg.grid = GridShape{c.get_int("grid", "nx"), c.get_int("grid", "nz")};
    cfg.seed = c.get_u64("run", "seed", 0);
    cfg.stream = c.get_u64("run", "stream", 0);
    cfg.linear_treatment = treatment_from_string(c.get_string("run", "linear_treatment", "auto"));
    cfg.cutoff_family =
        cutoff_family_from_string(c.get_string("run", "cutoff_family", "quintic-polynomial"));
    cfg.cutoff_norm_index = c.get_int("run", "cutoff_norm_index", 0);
    cfg.band = ZBand{c.get_double("run", "band_lo", ZBand{}.lo),
                     c.get_double("run", "band_hi", ZBand{}.hi)};
    cfg.halt_on_stop = c.get_bool("run", "halt_on_stop", false);
    cfg.debug_checks = c.get_bool("run", "debug_checks", false);
    cfg.snapshot_stride = c.get_int("run", "snapshot_stride", 0);
    cfg.h_tol = c.get_double("run", "h_tol", 1e-10);
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

VelocityState initial_from(const io::Config& c, const SimConfig& cfg) {
    const std::string kind = c.get_string("initial", "kind", "sample");
    if (kind == "zero") return VelocityState::from_u(SpectralField(cfg.grid, Parity::Even));
    if (kind == "sample") {
        return sample_state(cfg.grid, c.get_double("initial", "kappa", cfg.kappa), cfg.band,
                            c.get_double("initial", "x_amp_rel", 0.2),
                            c.get_u64("initial", "seed", 1), c.get_int("initial", "x_band", 3),
                            c.get_int("initial", "mode_cap", 14));
    }
    if (kind == "random_h") {
        return VelocityState::from_u(random_h_field(
            cfg.grid, c.get_int("initial", "band", 4), c.get_double("initial", "decay", 2.0),
            c.get_u64("initial", "seed", 1), c.get_double("initial", "amplitude", 1.0),
            c.get_u64("initial", "stream", 0)));
    }
    throw ValidationError("initial.kind must be sample, random_h, or zero: '" + kind + "'");
}

std::vector<NoiseModeSpec> parse_mode_specs(const io::Config& c, const std::string& key) {
    std::vector<NoiseModeSpec> out;
    for (const std::string& raw : c.get_list("noise", key)) {
        std::istringstream in(raw);
        NoiseModeSpec spec;
        std::string trig;
        if (!(in >> spec.p >> spec.q >> trig >> spec.amp) || (trig != "cos" && trig != "sin") ||
            (in >> std::ws, !in.eof()))
            throw ValidationError("noise." + key + " entries must look like 'p q cos|sin amp': '" +
                                  raw + "'");
        spec.sin_x = (trig == "sin");
        out.push_back(spec);
    }
    return out;
}

NoiseModel noise_from(const io::Config& c, const SimConfig& cfg) {
    const std::string model = c.get_string("noise", "model", "default");
    if (model == "zero") return NoiseModel::zero(cfg.grid);
    if (model == "default") {
        return NoiseModel::make_default(cfg.grid, c.get_int("noise", "k", 16),
                                        c.get_int("noise", "smooth_order", cfg.s),
                                        c.get_double("noise", "kappa1", 1.0),
                                        c.get_double("noise", "kappa2", 1.0));
    }
    if (model == "additive") {
        auto specs = parse_mode_specs(c, "chi");
        if (specs.empty()) throw ValidationError("additive noise needs at least one noise.chi");
        return NoiseModel::make_additive(cfg.grid, std::move(specs),
                                         c.get_int("noise", "smooth_order", 7));
    }
    if (model == "scalar") {
        return NoiseModel::make_scalar(cfg.grid, c.get_double("noise", "c"),
                                       c.get_int("noise", "smooth_order", 7));
    }
    throw ValidationError("noise.model must be default, additive, scalar, or zero: '" + model +
                          "'");
}

ExperimentConfig experiment_from(const io::Config& c, const SimConfig& cfg,
                                 const CliOptions& opts) {
    ExperimentConfig x;
    x.base = cfg;
    x.ensemble_size = c.get_int("experiment", "ensemble_size", 8);
    if (c.has("experiment", "ladder")) x.ladder = c.get_doubles("experiment", "ladder");
    x.reference_radius = c.get_double("experiment", "reference_radius", 0.0);
    x.m_bound = c.get_double("experiment", "m_bound", 0.0);
    x.threads = opts.threads;
    return x;
}

// --- artifact bookkeeping -------------------------------------------------------

struct RunDir {
    fs::path root;
    io::json artifacts = io::json::array();

    void emit(const std::string& rel, const std::string& bytes) {
        const uint64_t h = io::write_file(root / rel, bytes);
        artifacts.push_back(io::json{
            {"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", io::hash_hex(h)}});
    }
};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path resolve_out_dir(const CliOptions& opts, const std::string& subcommand) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    const char* env = std::getenv(out_root_env);
    return fs::path(env != nullptr ? env : "runs") / subcommand;
}

io::json resolved_json(const SimConfig& raw) {
    const SimConfig cfg = raw.resolved();
    io::json j;
    j["variant"] = to_string(cfg.variant);
    j["s"] = cfg.s;
    j["nu"] = io::jnum(cfg.nu);
    j["n_visc"] = cfg.n_visc;
    j["rho"] = io::jnum(cfg.rho);
    j["kappa"] = io::jnum(cfg.kappa);
    j["dt"] = io::jnum(cfg.dt);
    j["t_final"] = io::jnum(cfg.T);
    j["grid"] = io::json{{"nx", cfg.grid.nx}, {"nz", cfg.grid.nz}};
    j["seed"] = cfg.seed;
    j["stream"] = cfg.stream;
    j["cutoff_norm_index"] = cfg.cutoff_norm_index;
    j["band"] = io::json{{"lo", io::jnum(cfg.band.lo)}, {"hi", io::jnum(cfg.band.hi)}};
    j["snapshot_stride"] = cfg.snapshot_stride;
    return j;
}

void write_manifest(RunDir& dir, const std::string& subcommand, const CliOptions& opts,
                    const io::Config& cfg, const SimConfig& sim, const NoiseModel& noise,
                    io::json summary) {
    io::json m;
    m["format"] = "hspe-manifest";
    m["version"] = 1;
    m["subcommand"] = subcommand;
    m["created"] = utc_now();
    m["config"] = io::json{{"path", opts.config_path},
                           {"file_fnv1a64", io::hash_hex(io::fnv1a64_file(opts.config_path))},
                           {"overrides", opts.overrides},
                           {"echo", cfg.to_json()}};
    m["resolved"] = resolved_json(sim);
    const io::json noise_desc = io::noise_descriptor(noise);
    m["noise"] = io::json{{"descriptor", noise_desc},
                          {"fnv1a64", io::hash_hex(io::fnv1a64(noise_desc.dump()))}};
    m["threads"] = opts.threads;
    m["summary"] = std::move(summary);
    m["artifacts"] = dir.artifacts;
    io::write_json_file(dir.root / "manifest.json", m);
}

/// One-line NDJSON metadata record accompanying every experiment table:
/// enough to tie the CSV back to its exact inputs.
std::string experiment_meta(const std::string& name, const io::Config& cfg, const SimConfig& sim,
                            const NoiseModel& noise) {
    io::json rec;
    rec["kind"] = "experiment_meta";
    rec["experiment"] = name;
    rec["config_fnv1a64"] = io::hash_hex(io::fnv1a64(cfg.to_json().dump()));
    rec["seed"] = sim.seed;
    rec["stream"] = sim.stream;
    rec["noise_fnv1a64"] = io::hash_hex(io::fnv1a64(io::noise_descriptor(noise).dump()));
    return rec.dump() + "\n";
}

std::string csv_bytes(const io::CsvTable& t) {
    std::ostringstream os;
    t.write(os);
    return os.str();
}

// --- validate -------------------------------------------------------------------

int cmd_validate(const CliOptions& opts) {
    const io::Config cfg = load_config(opts);
    const SimConfig sim = sim_config_from(cfg, opts).resolved();
    sim.validate();
    const NoiseModel noise = noise_from(cfg, sim);
    const VelocityState initial = initial_from(cfg, sim);
    experiment_from(cfg, sim, opts).validate();

    std::cout << "ok\n";
    std::cout << "variant " << to_string(sim.variant) << ", grid " << sim.grid.nx << "x"
              << sim.grid.nz << ", s " << sim.s << ", cutoff norm index " << sim.cutoff_norm_index
              << "\n";

    const double budget = stability_budget(sim);
    std::cout << "stability budget: dt " << io::fmt(sim.dt) << ", budget ";
    if (std::isfinite(budget)) {
        std::cout << io::fmt(budget) << (sim.dt <= budget ? " (within budget)" : " (dt too large)");
    } else {
        std::cout << "unbounded (no linear term)";
    }
    std::cout << "\n";

    const RayleighReport mon = rayleigh_monitor(initial.u(), sim.kappa, sim.band);
    std::cout << "rayleigh monitor on initial data: min " << io::fmt(mon.min_val) << ", max "
              << io::fmt(mon.max_val) << ", violated fraction " << io::fmt(mon.violated_fraction)
              << ", " << (mon.pass ? "pass" : "FAIL") << "\n";

    // Advisory cut-off radius floor: rho >= (1 + C~)(M/c~ + 4) with the norm
    // equivalence constants realized from the measured shear range and M
    // twice the initial weighted norm.
    const double m_norm =
        2.0 * dskappa_norm(initial.u(), sim.cutoff_norm_index, WeightMode::floored(sim.kappa),
                           sim.band)
                  .value;
    if (mon.min_val > 0.0) {
        const double c_hi = std::max(1.0, 1.0 / std::sqrt(mon.min_val));
        const double c_lo = std::min(1.0, 1.0 / std::sqrt(mon.max_val));
        const double floor = (1.0 + c_hi) * (m_norm / c_lo + 4.0);
        std::cout << "cut-off radius advisory: rho " << io::fmt(sim.rho) << " vs floor "
                  << io::fmt(floor) << (sim.rho >= floor ? " (ok)" : " (low)") << "\n";
    } else {
        std::cout << "cut-off radius advisory: unavailable (initial shear reaches "
                  << io::fmt(mon.min_val) << ")\n";
    }
    return 0;
}

// --- run subcommands --------------------------------------------------------------

int run_simulate(RunDir& dir, const SimConfig& sim, const NoiseModel& noise,
                 const VelocityState& initial, io::json& summary) {
    const TrajectoryRecord rec = simulate(sim, noise, initial);
    std::ostringstream traj;
    io::write_trajectory(traj, rec);
    dir.emit("trajectory.ndjson", traj.str());
    for (size_t i = 0; i < rec.snapshots.size(); ++i) {
        std::ostringstream snap;
        io::write_snapshot(snap, rec.snapshots[i]);
        char name[48];
        std::snprintf(name, sizeof(name), "snapshots/state_%06zu.bin", i);
        dir.emit(name, snap.str());
    }
    summary["steps"] = rec.size() == 0 ? 0 : rec.size() - 1;
    summary["snapshots"] = rec.snapshots.size();
    if (rec.stopping) summary["stopping"] = io::stopping_to_json(*rec.stopping);
    summary["warnings"] = rec.warnings;
    if (!rec.times.empty()) {
        summary["final_norm"] = io::jnum(rec.norm_series.back().value);
        summary["final_theta_rho"] = io::jnum(rec.cutoff_series.back().first);
        summary["final_theta_kappa"] = io::jnum(rec.cutoff_series.back().second);
    }
    std::cout << "simulate: " << (rec.size() == 0 ? 0 : rec.size() - 1) << " steps";
    if (rec.stopping)
        std::cout << ", stopping " << to_string(rec.stopping->cause) << " at t "
                  << io::fmt(rec.stopping->time);
    std::cout << "\n";
    return 0;
}

int run_cancellation(RunDir& dir, const io::Config& cfg, const VelocityState& initial,
                     io::json& summary) {
    const int s = cfg.get_int("experiment", "s_deriv", 2);
    const double residual = cancellation_check(initial, s);
    io::CsvTable t({"s", "residual"});
    t.add_row({static_cast<double>(s), residual});
    dir.emit("tables/cancellation.csv", csv_bytes(t));
    summary["s"] = s;
    summary["residual"] = io::jnum(residual);
    std::cout << "cancellation residual: " << io::fmt(residual) << " (s = " << s << ")\n";
    return 0;
}

int run_galerkin(RunDir& dir, const io::Config& cfg, const SimConfig& sim,
                 const VelocityState& initial, io::json& summary) {
    const int s = cfg.get_int("experiment", "s_deriv", 2);
    const double n_trunc = cfg.get_double("experiment", "projection");
    // A radius beyond twice the dealias band keeps every product mode, so the
    // projection is inactive there and the identity must come back.
    const double n_inactive =
        2.0 * two_pi * static_cast<double>(dealias_limit(std::min(sim.grid.nx, sim.grid.nz)));
    const double r_trunc = galerkin_cancellation_demo(initial, s, n_trunc);
    const double r_inactive = galerkin_cancellation_demo(initial, s, n_inactive);

    // The demo multiplies on the grid, so the clean inactive reference needs
    // the product band inside the dealias limit; warn when the data is too
    // wide for the grid to resolve the quadratic term exactly.
    int mx = 0, mz = 0;
    initial.u().for_each_mode([&](int m1, int m2, size_t idx) {
        if (initial.u().coeffs()[idx] != cd{0.0, 0.0}) {
            mx = std::max(mx, std::abs(m1));
            mz = std::max(mz, std::abs(m2));
        }
    });
    const bool resolved_product = 2 * mx <= dealias_limit(sim.grid.nx) &&
                                  2 * mz <= dealias_limit(sim.grid.nz);
    if (!resolved_product)
        std::cout << "note: initial band (" << mx << ", " << mz
                  << ") exceeds half the dealias limit; the inactive reference is "
                     "resolution-limited\n";

    io::CsvTable t({"case", "n", "residual"});
    t.add_cells({"truncating", io::fmt(n_trunc), io::fmt(r_trunc)});
    t.add_cells({"inactive", io::fmt(n_inactive), io::fmt(r_inactive)});
    dir.emit("tables/galerkin.csv", csv_bytes(t));
    summary["residual_truncating"] = io::jnum(r_trunc);
    summary["residual_inactive"] = io::jnum(r_inactive);
    std::cout << "galerkin demo: truncating residual " << io::fmt(r_trunc) << " at n "
              << io::fmt(n_trunc) << ", inactive residual " << io::fmt(r_inactive) << "\n";
    return 0;
}

int run_cauchy(RunDir& dir, const ExperimentConfig& xcfg, const NoiseModel& noise,
               const VelocityState& initial, io::json& summary) {
    const CauchyTable table = cauchy_study(xcfg, noise, initial);
    std::vector<std::string> header{"radius"};
    for (double r : table.ladder) header.push_back(io::fmt(r));
    header.push_back("mean_stop_time");
    io::CsvTable t(header);
    for (size_t j = 0; j < table.ladder.size(); ++j) {
        std::vector<std::string> row{io::fmt(table.ladder[j])};
        for (size_t k = 0; k < table.ladder.size(); ++k)
            row.push_back(io::fmt(table.mean_sup[j][k]));
        row.push_back(io::fmt(table.mean_stop_time[j]));
        t.add_cells(std::move(row));
    }
    dir.emit("tables/cauchy.csv", csv_bytes(t));

    io::CsvTable cols({"k", "radius", "column_max"});
    for (size_t k = 0; k < table.column_max.size(); ++k)
        cols.add_row({static_cast<double>(k), table.ladder[k], table.column_max[k]});
    dir.emit("tables/cauchy_columns.csv", csv_bytes(cols));

    io::json cm = io::json::array();
    for (double v : table.column_max) cm.push_back(io::jnum(v));
    summary["paths"] = table.paths;
    summary["column_max"] = cm;
    std::cout << "cauchy: " << table.ladder.size() << "-rung ladder, column maxima";
    for (double v : table.column_max) std::cout << ' ' << io::fmt(v);
    std::cout << "\n";
    return 0;
}

int run_uniqueness(RunDir& dir, const io::Config& cfg, const ExperimentConfig& xcfg,
                   const NoiseModel& noise, const VelocityState& initial, io::json& summary) {
    const double delta = cfg.get_double("experiment", "delta", 0.0);
    const UniquenessReport rep = uniqueness_check(xcfg, noise, initial, delta);
    io::CsvTable t({"t", "divergence"});
    for (size_t i = 0; i < rep.times.size(); ++i) t.add_row({rep.times[i], rep.divergence[i]});
    dir.emit("tables/uniqueness.csv", csv_bytes(t));
    summary["delta"] = io::jnum(rep.delta);
    summary["bitwise_identical"] = rep.bitwise_identical;
    summary["max_l2_difference"] = io::jnum(rep.max_l2_difference);
    summary["fitted_rate"] = io::jnum(rep.fitted_rate);
    std::cout << "uniqueness: delta " << io::fmt(rep.delta) << ", bitwise "
              << (rep.bitwise_identical ? "yes" : "no") << ", max L2 difference "
              << io::fmt(rep.max_l2_difference) << "\n";
    if (delta == 0.0 && !rep.bitwise_identical)
        throw NumericalError("identical seed and data produced different trajectories");
    return 0;
}

int run_rayleigh(RunDir& dir, const ExperimentConfig& xcfg, const NoiseModel& noise,
                 const VelocityState& initial, io::json& summary) {
    const RayleighStudy study = rayleigh_preservation_study(xcfg, noise, initial);
    io::CsvTable t({"paths", "kappa", "dt", "max_deviation", "overshoot", "c_estimate",
                    "activation_fraction", "bound_holds"});
    t.add_cells({io::fmt(study.paths), io::fmt(study.kappa), io::fmt(study.dt),
                 io::fmt(study.max_deviation), io::fmt(study.overshoot),
                 io::fmt(study.c_estimate), io::fmt(study.activation_fraction),
                 study.bound_holds ? "true" : "false"});
    dir.emit("tables/rayleigh.csv", csv_bytes(t));
    summary["max_deviation"] = io::jnum(study.max_deviation);
    summary["overshoot"] = io::jnum(study.overshoot);
    summary["c_estimate"] = io::jnum(study.c_estimate);
    summary["activation_fraction"] = io::jnum(study.activation_fraction);
    summary["bound_holds"] = study.bound_holds;
    std::cout << "rayleigh: max deviation " << io::fmt(study.max_deviation) << " vs kappa "
              << io::fmt(study.kappa) << ", overshoot " << io::fmt(study.overshoot)
              << ", activation " << io::fmt(study.activation_fraction) << "\n";
    if (!study.bound_holds) throw NumericalError("curvature deviation left its sqrt(dt) envelope");
    return 0;
}

int run_moments(RunDir& dir, const io::Config& cfg, const ExperimentConfig& xcfg,
                const NoiseModel& noise, const VelocityState& initial, io::json& summary) {
    const int p = cfg.get_int("experiment", "p", 2);
    const MomentStudy study = ensemble_moments(xcfg, noise, initial, p);
    io::CsvTable t({"t", "mean_sup", "std_error_sup", "mean_instant", "mean_l2_sq"});
    for (size_t i = 0; i < study.times.size(); ++i)
        t.add_row({study.times[i], study.mean_sup[i], study.std_error_sup[i],
                   study.mean_instant[i], study.mean_l2_sq[i]});
    dir.emit("tables/moments.csv", csv_bytes(t));
    summary["p"] = study.p;
    summary["paths"] = study.paths;
    summary["initial_moment"] = io::jnum(study.initial_moment);
    summary["envelope_rate"] = io::jnum(study.envelope_rate);
    std::cout << "moments: p " << study.p << ", " << study.paths << " paths, envelope rate "
              << io::fmt(study.envelope_rate) << "\n";
    return 0;
}

int run_verify_noise(RunDir& dir, const io::Config& cfg, const SimConfig& sim,
                     const NoiseModel& noise, io::json& summary) {
    const int samples = cfg.get_int("experiment", "samples", 100);
    const NoiseBoundReport rep = verify_noise_bounds(noise, sim.s, samples, sim.seed);
    io::CsvTable t({"constant", "value"});
    t.add_cells({"c_growth", io::fmt(rep.c_growth)});
    t.add_cells({"c_deriv_growth", io::fmt(rep.c_deriv_growth)});
    t.add_cells({"c_lipschitz", io::fmt(rep.c_lipschitz)});
    t.add_cells({"c_deriv_lipschitz", io::fmt(rep.c_deriv_lipschitz)});
    t.add_cells({"predicted", io::fmt(rep.predicted)});
    dir.emit("tables/noise_bounds.csv", csv_bytes(t));
    summary["max_c"] = io::jnum(rep.max_c());
    summary["predicted"] = io::jnum(rep.predicted);
    summary["samples"] = rep.samples;
    summary["pass"] = rep.pass;
    std::cout << "noise bounds: max constant " << io::fmt(rep.max_c()) << " vs predicted "
              << io::fmt(rep.predicted) << " over " << rep.samples << " samples, "
              << (rep.pass ? "pass" : "FAIL") << "\n";
    if (!rep.pass) throw NumericalError("measured noise constants exceed 2(kappa1 + kappa2)");
    return 0;
}

int run_poincare(RunDir& dir, const io::Config& cfg, const SimConfig& sim, io::json& summary) {
    std::vector<double> radii{two_pi, 2.0 * two_pi, 4.0 * two_pi};
    if (cfg.has("experiment", "radii")) radii = cfg.get_doubles("experiment", "radii");
    std::vector<int> orders{0, 1, 2};
    if (cfg.has("experiment", "orders")) {
        orders.clear();
        for (double v : cfg.get_doubles("experiment", "orders")) orders.push_back(static_cast<int>(v));
    }
    const int samples = cfg.get_int("experiment", "samples", 20);

    io::CsvTable t({"n", "m", "max_tail_ratio", "tail_bound", "max_inverse_ratio",
                    "inverse_bound", "pass"});
    bool all_pass = true;
    for (double n : radii) {
        for (int m : orders) {
            double tail = 0.0, inv = 0.0, tail_bound = 0.0, inv_bound = 0.0;
            bool pass = true;
            for (int i = 0; i < samples; ++i) {
                const SpectralField f = random_h_field(sim.grid, 8, 1.5, sim.seed, 1.0,
                                                       static_cast<uint64_t>(i));
                const PoincareReport rep = poincare_check(f, n, m);
                tail = std::max(tail, rep.tail.ratio());
                inv = std::max(inv, rep.inverse.ratio());
                tail_bound = rep.tail.bound;
                inv_bound = rep.inverse.bound;
                pass = pass && rep.tail.pass && rep.inverse.pass;
            }
            all_pass = all_pass && pass;
            t.add_cells({io::fmt(n), std::to_string(m), io::fmt(tail), io::fmt(tail_bound),
                         io::fmt(inv), io::fmt(inv_bound), pass ? "true" : "false"});
        }
    }
    dir.emit("tables/poincare.csv", csv_bytes(t));
    summary["pass"] = all_pass;
    summary["samples"] = samples;
    std::cout << "poincare: " << radii.size() << " radii x " << orders.size() << " orders over "
              << samples << " fields, " << (all_pass ? "pass" : "FAIL") << "\n";
    if (!all_pass) throw NumericalError("a projection inequality exceeded its sqrt(2) constant");
    return 0;
}

int cmd_run(const std::string& sub, const CliOptions& opts) {
    const io::Config cfg = load_config(opts);
    const SimConfig sim = sim_config_from(cfg, opts);
    sim.resolved().validate();
    const NoiseModel noise = noise_from(cfg, sim);
    const VelocityState initial = initial_from(cfg, sim);
    const ExperimentConfig xcfg = experiment_from(cfg, sim, opts);

    RunDir dir{resolve_out_dir(opts, sub)};
    fs::create_directories(dir.root);

    io::json summary = io::json::object();
    int rc = 0;
    if (sub == "simulate") {
        rc = run_simulate(dir, sim, noise, initial, summary);
    } else {
        dir.emit("trajectory.ndjson", experiment_meta(sub, cfg, sim, noise));
        if (sub == "cancellation") rc = run_cancellation(dir, cfg, initial, summary);
        else if (sub == "galerkin-demo") rc = run_galerkin(dir, cfg, sim, initial, summary);
        else if (sub == "cauchy") rc = run_cauchy(dir, xcfg, noise, initial, summary);
        else if (sub == "uniqueness") rc = run_uniqueness(dir, cfg, xcfg, noise, initial, summary);
        else if (sub == "rayleigh") rc = run_rayleigh(dir, xcfg, noise, initial, summary);
        else if (sub == "moments") rc = run_moments(dir, cfg, xcfg, noise, initial, summary);
        else if (sub == "verify-noise") rc = run_verify_noise(dir, cfg, sim, noise, summary);
        else if (sub == "poincare") rc = run_poincare(dir, cfg, sim, summary);
        else throw ValidationError("unknown subcommand: " + sub);
    }
    write_manifest(dir, sub, opts, cfg, sim, noise, std::move(summary));
    std::cout << "artifacts in " << dir.root.string() << "\n";
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pseudo-spectral simulator for hydrostatic flow with multiplicative noise"};
    app.require_subcommand(1);

    CliOptions opts;
    std::string run_sub;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", opts.config_path, "run configuration file")->required();
        c->add_option("--override", opts.overrides, "section.key=value (repeatable)");
    };

    CLI::App* validate = app.add_subcommand("validate", "check a configuration without running");
    add_common(validate);

    CLI::App* run = app.add_subcommand("run", "run a simulation or batch experiment");
    run->require_subcommand(1);
    static constexpr const char* subs[] = {"simulate",   "cancellation", "galerkin-demo",
                                           "cauchy",     "uniqueness",   "rayleigh",
                                           "moments",    "verify-noise", "poincare"};
    for (const char* name : subs) {
        CLI::App* c = run->add_subcommand(name);
        add_common(c);
        c->add_option("--out", opts.out_dir, "output directory (default $HSPE_OUT_ROOT/<sub>)");
        auto* seed_opt = c->add_option("--seed", opts.seed, "override run.seed");
        c->add_option("--threads", opts.threads, "worker cap for path ensembles (0 = all)");
        c->callback([&, name, seed_opt] {
            opts.seed_set = seed_opt->count() > 0;
            run_sub = name;
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(opts);
        return cmd_run(run_sub, opts);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
