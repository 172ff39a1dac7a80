#pragma once

// Batch scenario runner behind the CLI: parses a JSON configuration, runs one
// of the experiment families, and emits columnar CSV plus a JSON summary.
// Runs are deterministic given (config, seed): stable column order, 17
// significant digits, alphabetically ordered JSON keys, counter-based RNG.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"
#include "cpm/kalman.hpp"
#include "cpm/moments.hpp"
#include "cpm/observers.hpp"
#include "cpm/cavity.hpp"
#include "cpm/record.hpp"
#include "cpm/riccati.hpp"

namespace cpm {

enum class ScenarioKind { SteadyState, Relax, Simulate, Observers, KalmanCompare, Cavity };

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "steady-state") return ScenarioKind::SteadyState;
    if (s == "relax") return ScenarioKind::Relax;
    if (s == "simulate") return ScenarioKind::Simulate;
    if (s == "observers") return ScenarioKind::Observers;
    if (s == "kalman-compare") return ScenarioKind::KalmanCompare;
    if (s == "cavity") return ScenarioKind::Cavity;
    throw ConfigError("kind", "unknown scenario '" + s + "'");
}

inline std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::SteadyState: return "steady-state";
        case ScenarioKind::Relax: return "relax";
        case ScenarioKind::Simulate: return "simulate";
        case ScenarioKind::Observers: return "observers";
        case ScenarioKind::KalmanCompare: return "kalman-compare";
        case ScenarioKind::Cavity: return "cavity";
    }
    return "?";
}

struct ObserversSetup {
    double v_b0 = 1e10;         // Bob's isotropic prior variance
    double e_xx0 = 1e10, e_pp0 = 1e10, e_xp0 = 0.0;
    double threshold = 1e-6;    // agreement threshold (relative)
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::Relax;
    ModelParams params;
    GaussianState initial;
    double horizon = 0.0;
    double dt = 0.0; // 0 -> default_dt(params)
    std::size_t steps = 0;
    std::size_t output_stride = 1;
    std::vector<std::uint64_t> seeds{1};
    ObserversSetup observers;
    std::optional<CavityConfig> cavity;         // inline cavity config
    std::optional<std::string> cavity_preset;   // or a named preset
};

namespace scenario_detail {

template <typename T>
T require(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(key, "missing");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

template <typename T>
T optional_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

inline CavityConfig cavity_from_json(const nlohmann::json& j) {
    CavityConfig c;
    c.g0 = require<double>(j, "g0");
    c.n_photons = require<double>(j, "n_photons");
    c.delta = require<double>(j, "delta");
    c.kappa1 = require<double>(j, "kappa1");
    c.kappa2 = require<double>(j, "kappa2");
    c.k_l = require<double>(j, "k_l");
    c.gamma_free = require<double>(j, "gamma_free");
    c.mass = require<double>(j, "mass");
    c.omega_trap = require<double>(j, "omega_trap");
    c.eta_det = require<double>(j, "eta_det");
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("cavity", e.what());
    }
    return c;
}

} // namespace scenario_detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
    using namespace scenario_detail;
    ScenarioConfig cfg;
    cfg.kind = scenario_kind_from_string(require<std::string>(j, "kind"));

    if (cfg.kind == ScenarioKind::Cavity) {
        if (j.contains("cavity") && j.at("cavity").is_object() && j.at("cavity").contains("preset")) {
            const std::string name = j.at("cavity").at("preset").get<std::string>();
            if (name != "cesium") throw ConfigError("cavity.preset", "unknown preset '" + name + "'");
            cfg.cavity_preset = name;
        } else if (j.contains("cavity")) {
            cfg.cavity = cavity_from_json(j.at("cavity"));
        } else {
            throw ConfigError("cavity", "missing");
        }
        return cfg;
    }

    if (!j.contains("params")) throw ConfigError("params", "missing");
    const auto& pj = j.at("params");
    cfg.params.omega = optional_or<double>(pj, "omega", 1.0);
    cfg.params.r = require<double>(pj, "r");
    cfg.params.phi = optional_or<double>(pj, "phi", 0.0);
    cfg.params.q = optional_or<double>(pj, "q", 1.0);
    const std::string mode = optional_or<std::string>(pj, "mode", "homodyne");
    if (mode == "homodyne") cfg.params.mode = Mode::Homodyne;
    else if (mode == "heterodyne") cfg.params.mode = Mode::Heterodyne;
    else throw ConfigError("params.mode", "must be 'homodyne' or 'heterodyne'");
    try {
        cfg.params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("params", e.what());
    }

    if (j.contains("initial")) {
        const auto& ij = j.at("initial");
        cfg.initial.mean_x = optional_or<double>(ij, "mean_x", 0.0);
        cfg.initial.mean_p = optional_or<double>(ij, "mean_p", 0.0);
        cfg.initial.v_xx = require<double>(ij, "v_xx");
        cfg.initial.v_pp = require<double>(ij, "v_pp");
        cfg.initial.v_xp = optional_or<double>(ij, "v_xp", 0.0);
        if (!cfg.initial.covariance().positive_definite())
            throw ConfigError("initial", "covariance must be positive definite");
    }

    if (cfg.kind != ScenarioKind::SteadyState) {
        cfg.horizon = require<double>(j, "horizon");
        if (!(cfg.horizon >= 0.0)) throw ConfigError("horizon", "must be >= 0");
    }
    cfg.dt = optional_or<double>(j, "dt", 0.0);
    if (cfg.dt < 0.0) throw ConfigError("dt", "must be > 0");
    if (j.contains("steps")) {
        cfg.steps = require<std::uint64_t>(j, "steps");
    } else {
        const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(cfg.params);
        cfg.steps = static_cast<std::size_t>(std::llround(cfg.horizon / dt));
    }
    if (cfg.dt == 0.0) cfg.dt = default_dt(cfg.params);
    cfg.output_stride = optional_or<std::uint64_t>(j, "output_stride", 1);
    if (cfg.output_stride == 0) throw ConfigError("output_stride", "must be >= 1");
    cfg.seeds = optional_or<std::vector<std::uint64_t>>(j, "seeds", {1});
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must not be empty");

    if (cfg.kind == ScenarioKind::Observers) {
        if (!j.contains("observers")) throw ConfigError("observers", "missing");
        const auto& oj = j.at("observers");
        cfg.observers.v_b0 = require<double>(oj, "v_b0");
        cfg.observers.e_xx0 = require<double>(oj, "e_xx0");
        cfg.observers.e_pp0 = require<double>(oj, "e_pp0");
        cfg.observers.e_xp0 = optional_or<double>(oj, "e_xp0", 0.0);
        cfg.observers.threshold = optional_or<double>(oj, "threshold", 1e-6);
        if (!(cfg.observers.v_b0 > 0.0)) throw ConfigError("observers.v_b0", "must be > 0");
    }
    return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", std::string("parse error: ") + e.what());
    }
    return parse_scenario(j);
}

// ------------------------------------------------------------------
// Emission
// ------------------------------------------------------------------

namespace scenario_detail {

struct CsvWriter {
    std::ofstream out;
    bool with_errors = false;

    CsvWriter(const std::string& path, bool errors_cols) : out(path, std::ios::binary), with_errors(errors_cols) {
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
        out << "t,x_mean,p_mean,v_xx,v_pp,v_xp,area,S_vn,s_lin";
        if (with_errors) out << ",e_xx,e_pp,e_xp";
        out << '\n';
    }

    void row(double t, double x, double p, const Covariance& v, const double* errs = nullptr) {
        const double area = phase_space_area(v);
        out << format_g17(t) << ',' << format_g17(x) << ',' << format_g17(p) << ',' << format_g17(v.xx) << ','
            << format_g17(v.pp) << ',' << format_g17(v.xp) << ',' << format_g17(area) << ','
            << format_g17(von_neumann_entropy_from_area(std::max(area, 1.0))) << ','
            << format_g17(linear_entropy_from_area(std::max(area, 1.0)));
        if (with_errors) out << ',' << format_g17(errs[0]) << ',' << format_g17(errs[1]) << ',' << format_g17(errs[2]);
        out << '\n';
    }
};

inline nlohmann::json steady_summary(const ModelParams& p) {
    const Covariance ss = steady_state(p);
    const double area = phase_space_area(ss);
    const auto sol = RiccatiSolution::from_params(p.mode == Mode::Heterodyne ? 2.0 * p.r : p.r, p.q);
    return nlohmann::json{{"v_xx", ss.xx},
                          {"v_pp", ss.pp},
                          {"v_xp", ss.xp},
                          {"area", area},
                          {"b", sol.b},
                          {"c", sol.c},
                          {"S_vn", von_neumann_entropy_from_area(std::max(area, 1.0))},
                          {"s_lin", linear_entropy_from_area(std::max(area, 1.0))}};
}

inline double heisenberg_violation(const Covariance& v, double q) {
    return std::max(0.0, q * q - v.det());
}

} // namespace scenario_detail

// Post-hoc check of an emitted CSV: every row must satisfy the positivity and
// (for q = 1 runs) Heisenberg-floor invariants. Returns a description of the
// first violation, or nullopt if the file is clean.
inline std::optional<std::string> verify_csv(const std::string& path, double tol = kSdeTol) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "cannot open " + path;
    std::string line;
    if (!std::getline(in, line)) return path + ": missing header";
    if (line.rfind("t,x_mean,p_mean,v_xx,v_pp,v_xp,area", 0) != 0) return path + ": unexpected header";
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        double cols[7];
        const char* s = line.c_str();
        char* end = nullptr;
        for (int c = 0; c < 7; ++c) {
            cols[c] = std::strtod(s, &end);
            if (end == s) return path + ": row " + std::to_string(n) + ": short row";
            s = (*end == ',') ? end + 1 : end;
        }
        const Covariance v{cols[3], cols[4], cols[5]};
        if (!(v.xx > 0.0) || !(v.pp > 0.0))
            return path + ": row " + std::to_string(n) + ": non-positive variance";
        if (v.det() < 1.0 - tol)
            return path + ": row " + std::to_string(n) + ": area below Heisenberg floor (A^2 = " +
                   std::to_string(v.det()) + ")";
        const double area = std::sqrt(std::max(0.0, v.det()));
        if (std::abs(area - cols[6]) > 1e-9 * std::max(1.0, area))
            return path + ": row " + std::to_string(n) + ": area column inconsistent";
    }
    return std::nullopt;
}

// Runs a scenario, writing artifacts under out_dir; returns the summary JSON
// (also written to out_dir/summary.json).
inline nlohmann::json run_scenario(const ScenarioConfig& cfg, const std::string& out_dir) {
    using namespace scenario_detail;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    nlohmann::json summary{{"scenario", to_string(cfg.kind)}};

    if (cfg.kind == ScenarioKind::Cavity) {
        const CavityConfig cav = cfg.cavity_preset ? cesium_preset() : *cfg.cavity;
        const double alpha = measurement_strength(cav);
        const auto rr = dimensionless_r(cav);
        const auto heat = heating_budget(cav);
        const auto est_hom = collapse_time_estimate(cav, Mode::Homodyne);
        const auto est_het = collapse_time_estimate(cav, Mode::Heterodyne);
        summary["cavity"] = {{"alpha", alpha},
                             {"r", rr.r},
                             {"r_decomposition", rr.r_decomposition},
                             {"omega_rec", rr.omega_rec},
                             {"s_sat", rr.s_sat},
                             {"gamma_cav", rr.gamma_cav},
                             {"lamb_dicke_ok", rr.lamb_dicke_ok},
                             {"dispersive_ok", rr.dispersive_ok},
                             {"beta_total", heat.beta_total},
                             {"q", heat.q},
                             {"eta_eff", heat.eta_eff},
                             {"tau_col_homodyne_s", est_hom.tau_seconds},
                             {"tau_col_heterodyne_s", est_het.tau_seconds},
                             {"free_particle_floor_s", est_hom.free_particle_floor_seconds}};
        std::ofstream out(path("summary.json"), std::ios::binary);
        out << summary.dump(2) << '\n';
        return summary;
    }

    const ModelParams& P = cfg.params;
    summary["params"] = record_io::params_to_json(P);
    summary["tau_col"] = collapse_time(P);
    summary["sign_flip_regime"] = std::abs(std::sin(2.0 * P.phi)) > P.r;
    bool steady_exists = true;
    try {
        summary["steady_state"] = steady_summary(P);
    } catch (const NoSteadyStateError&) {
        steady_exists = false;
        summary["steady_state"] = nullptr;
    }

    double max_violation = 0.0;

    switch (cfg.kind) {
        case ScenarioKind::SteadyState: {
            if (!steady_exists) throw NoSteadyStateError("steady-state scenario at phi = pi/2 (mod pi)");
            const Covariance ss = steady_state(P);
            CsvWriter csv(path("steady_state.csv"), false);
            csv.row(0.0, 0.0, 0.0, ss);
            max_violation = heisenberg_violation(ss, P.q);
            break;
        }
        case ScenarioKind::Relax: {
            std::vector<double> grid(cfg.steps + 1);
            for (std::size_t k = 0; k <= cfg.steps; ++k) grid[k] = static_cast<double>(k) * cfg.dt;
            const auto vpath = integrate_covariance(RiccatiCoeffs::from_params(P), cfg.initial.covariance(), grid);
            CsvWriter csv(path("relax.csv"), false);
            for (std::size_t k = 0; k <= cfg.steps; k += cfg.output_stride) {
                const double wt = P.omega * grid[k];
                const double x = cfg.initial.mean_x * std::cos(wt) + cfg.initial.mean_p * std::sin(wt);
                const double p = -cfg.initial.mean_x * std::sin(wt) + cfg.initial.mean_p * std::cos(wt);
                csv.row(grid[k], x, p, vpath[k]);
                max_violation = std::max(max_violation, heisenberg_violation(vpath[k], P.q));
            }
            summary["final_state"] = {{"v_xx", vpath.back().xx},
                                      {"v_pp", vpath.back().pp},
                                      {"v_xp", vpath.back().xp},
                                      {"area", phase_space_area(vpath.back())}};
            if (steady_exists) {
                const Covariance ss = steady_state(P);
                double tconv = 0.0;
                for (std::size_t k = 0; k <= cfg.steps; ++k)
                    if (std::abs(vpath[k].xx - ss.xx) >= 1e-4) tconv = grid[k];
                summary["convergence_time"] = tconv;
            }
            break;
        }
        case ScenarioKind::Simulate: {
            nlohmann::json per_seed = nlohmann::json::array();
            for (const auto seed : cfg.seeds) {
                const auto traj = simulate(P, cfg.initial, cfg.steps, cfg.dt, seed);
                const std::string tag = "seed_" + std::to_string(seed);
                CsvWriter csv(path("traj_" + tag + ".csv"), false);
                for (std::size_t k = 0; k < traj.states.size(); k += cfg.output_stride) {
                    const auto& s = traj.states[k];
                    csv.row(traj.times[k], s.mean_x, s.mean_p, s.covariance());
                    max_violation = std::max(max_violation, heisenberg_violation(s.covariance(), P.q));
                }
                write_record_csv(traj.record, path("record_" + tag + ".csv"));
                write_record_sidecar(traj.record, path("record_" + tag + ".json"));
                const auto& fin = traj.states.back();
                per_seed.push_back({{"seed", seed},
                                    {"final_mean_x", fin.mean_x},
                                    {"final_mean_p", fin.mean_p},
                                    {"final_v_xx", fin.v_xx}});
            }
            summary["runs"] = per_seed;
            break;
        }
        case ScenarioKind::Observers: {
            std::vector<double> grid(cfg.steps + 1);
            for (std::size_t k = 0; k <= cfg.steps; ++k) grid[k] = static_cast<double>(k) * cfg.dt;
            ObserverErrorState init;
            init.v_b = isotropic(cfg.observers.v_b0);
            init.e_xx = cfg.observers.e_xx0;
            init.e_pp = cfg.observers.e_pp0;
            init.e_xp = cfg.observers.e_xp0;
            const auto flow = error_covariance_flow(init, P, grid);
            CsvWriter csv(path("observers.csv"), true);
            for (std::size_t k = 0; k < flow.size(); k += cfg.output_stride) {
                const double errs[3] = {flow[k].e_xx, flow[k].e_pp, flow[k].e_xp};
                csv.row(grid[k], 0.0, 0.0, flow[k].v_b, errs);
                max_violation = std::max(max_violation, heisenberg_violation(flow[k].v_b, P.q));
            }
            const auto t_rel = agreement_time(grid, flow, cfg.observers.threshold, AgreementReference::InitialDet);
            const auto t_abs = agreement_time(grid, flow, cfg.observers.threshold, AgreementReference::SteadyDet,
                                              P.q * P.q);
            summary["t_agree_initial"] = t_rel ? nlohmann::json(*t_rel) : nlohmann::json(nullptr);
            summary["t_agree_steady"] = t_abs ? nlohmann::json(*t_abs) : nlohmann::json(nullptr);
            summary["final_error_det"] = flow.back().error_det();
            break;
        }
        case ScenarioKind::KalmanCompare: {
            const auto traj = simulate(P, cfg.initial, cfg.steps, cfg.dt, cfg.seeds.front());
            const ClassicalModel model = identify_from_quantum(P.phi, P.r, P.omega);
            GaussianState qs = cfg.initial;
            GaussianState ks = cfg.initial;
            CsvWriter csv_q(path("kalman_quantum.csv"), false);
            CsvWriter csv_c(path("kalman_classical.csv"), false);
            double max_mean = 0.0, max_cov = 0.0;
            csv_q.row(0.0, qs.mean_x, qs.mean_p, qs.covariance());
            csv_c.row(0.0, ks.mean_x, ks.mean_p, ks.covariance());
            for (std::size_t k = 0; k < cfg.steps; ++k) {
                const double dq = traj.record.increments_q1[k];
                qs = quantum_moment_step(P, qs, dq, 0.0, cfg.dt);
                ks = kalman_step(model, ks, dq, cfg.dt);
                max_mean = std::max({max_mean, std::abs(qs.mean_x - ks.mean_x), std::abs(qs.mean_p - ks.mean_p)});
                max_cov = std::max({max_cov, std::abs(qs.v_xx - ks.v_xx), std::abs(qs.v_pp - ks.v_pp),
                                    std::abs(qs.v_xp - ks.v_xp)});
                if ((k + 1) % cfg.output_stride == 0) {
                    csv_q.row(traj.times[k + 1], qs.mean_x, qs.mean_p, qs.covariance());
                    csv_c.row(traj.times[k + 1], ks.mean_x, ks.mean_p, ks.covariance());
                }
                max_violation = std::max(max_violation, heisenberg_violation(qs.covariance(), P.q));
            }
            const auto rep = admissibility_report(model);
            summary["kalman"] = {{"max_mean_diff", max_mean},
                                 {"max_cov_diff", max_cov},
                                 {"model", {{"obs_noise", model.obs_noise},
                                            {"proc_noise", model.proc_noise},
                                            {"gain", model.gain},
                                            {"corr", model.corr}}},
                                 {"admissible", rep.admissible},
                                 {"steady_area", rep.steady_area}};
            break;
        }
        default: break;
    }

    summary["max_admissibility_violation"] = max_violation;
    std::ofstream out(path("summary.json"), std::ios::binary);
    out << summary.dump(2) << '\n';
    return summary;
}

} // namespace cpm
