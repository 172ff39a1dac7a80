#pragma once

// SI-unit experiment planner for the dispersive cavity-QED realization of
// continuous position measurement: maps cavity parameters to the measurement
// strength alpha, the dimensionless ratio r, heating contributions and the
// imperfection factor q, and collapse-time estimates in seconds.

#include <cmath>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"
#include "cpm/riccati.hpp"

namespace cpm {

struct PhysicalConstants {
    double hbar = 1.054571817e-34; // J s (CODATA)
};

inline constexpr double kCesiumMass = 2.2069e-25; // kg

struct CavityConfig {
    double g0 = 0.0;         // maximal single-photon Rabi coupling, rad/s
    double n_photons = 0.0;  // steady intracavity photon number
    double delta = 0.0;      // atom-cavity detuning, rad/s
    double kappa1 = 0.0;     // field decay through the driving mirror, rad/s
    double kappa2 = 0.0;     // field decay through the detected mirror, rad/s
    double k_l = 0.0;        // light wavenumber, 1/m
    double gamma_free = 0.0; // free-space atomic decay, rad/s
    double mass = 0.0;       // particle mass, kg
    double omega_trap = 0.0; // trap frequency, rad/s
    double eta_det = 1.0;    // photodetector efficiency in (0, 1]

    double kappa() const { return kappa1 + kappa2; }

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("CavityConfig: ") + name + " must be > 0");
        };
        pos(g0, "g0");
        pos(n_photons, "n_photons");
        pos(delta, "delta");
        pos(kappa(), "kappa1 + kappa2");
        if (kappa1 < 0.0 || kappa2 < 0.0) throw std::invalid_argument("CavityConfig: kappa1/kappa2 must be >= 0");
        pos(k_l, "k_l");
        if (gamma_free < 0.0) throw std::invalid_argument("CavityConfig: gamma_free must be >= 0");
        pos(mass, "mass");
        pos(omega_trap, "omega_trap");
        if (!(eta_det > 0.0 && eta_det <= 1.0)) throw std::invalid_argument("CavityConfig: eta_det must be in (0, 1]");
    }
};

// alpha = 2 g0^4 n k_L^2 / (Delta^2 kappa), in 1/(s m^2).
inline double measurement_strength(const CavityConfig& c) {
    c.validate();
    const double g2 = c.g0 * c.g0;
    return 2.0 * g2 * g2 * c.n_photons * c.k_l * c.k_l / (c.delta * c.delta * c.kappa());
}

struct DimensionlessR {
    double r = 0.0;               // m omega^2 / (2 hbar alpha)
    double r_decomposition = 0.0; // (omega/omega_rec)(1/8 s_sat)(omega/Gamma_cav)
    double omega_rec = 0.0;       // hbar k_L^2 / 2m
    double s_sat = 0.0;           // g0^2 n / Delta^2
    double gamma_cav = 0.0;       // g0^2 / kappa
    bool lamb_dicke_ok = false;   // omega_rec / omega < 0.1
    bool dispersive_ok = false;   // s_sat < 0.1
};

inline DimensionlessR dimensionless_r(const CavityConfig& c, const PhysicalConstants& k = {}) {
    const double alpha = measurement_strength(c);
    DimensionlessR out;
    out.r = c.mass * c.omega_trap * c.omega_trap / (2.0 * k.hbar * alpha);
    out.omega_rec = k.hbar * c.k_l * c.k_l / (2.0 * c.mass);
    out.s_sat = c.g0 * c.g0 * c.n_photons / (c.delta * c.delta);
    out.gamma_cav = c.g0 * c.g0 / c.kappa();
    out.r_decomposition =
        (c.omega_trap / out.omega_rec) * (1.0 / (8.0 * out.s_sat)) * (c.omega_trap / out.gamma_cav);
    out.lamb_dicke_ok = out.omega_rec / c.omega_trap < 0.1;
    out.dispersive_ok = out.s_sat < 0.1;
    return out;
}

// Heating budget: detector inefficiency, loss through the driving mirror
// (drive on mirror 1, detection on mirror 2), and cavity-mediated spontaneous
// emission beta_s = alpha Gamma kappa / (4 g0^2). q = sqrt(1 + beta/alpha).
struct HeatingBudget {
    double beta_total = 0.0;
    double q = 1.0;
    double eta_eff = 1.0; // 1/q^2
};

inline HeatingBudget heating_budget(const CavityConfig& c) {
    const double alpha = measurement_strength(c);
    const double beta_det = alpha * (1.0 - c.eta_det) / c.eta_det;
    const double beta_mirror = alpha * c.kappa1 / c.kappa();
    const double beta_spont = alpha * c.gamma_free * c.kappa() / (4.0 * c.g0 * c.g0);
    HeatingBudget h;
    h.beta_total = beta_det + beta_mirror + beta_spont;
    h.q = std::sqrt(1.0 + h.beta_total / alpha);
    h.eta_eff = 1.0 / (h.q * h.q);
    return h;
}

// Collapse-time estimate in seconds, assuming ideal detection (q = 1).
// The free-particle floor sqrt(8 m / hbar alpha) is reported alongside; it is
// the strong-measurement limit where the trap no longer matters.
struct CollapseEstimate {
    double tau_seconds = 0.0;
    double free_particle_floor_seconds = 0.0;
    double r = 0.0;
};

inline CollapseEstimate collapse_time_estimate(const CavityConfig& c, Mode mode,
                                               const PhysicalConstants& k = {}) {
    const auto rr = dimensionless_r(c, k);
    CollapseEstimate est;
    est.r = rr.r;
    est.tau_seconds = collapse_time(rr.r, c.omega_trap, 1.0, mode);
    est.free_particle_floor_seconds = std::sqrt(8.0 * c.mass / (k.hbar * measurement_strength(c)));
    return est;
}

// Reconstructed cesium/high-finesse-cavity preset. The published estimates
// quote alpha = 2.4e20 s^-1 m^-2 and r = {5.6, 0.63} at omega/2pi =
// {180, 60} kHz without tabulating the raw inputs; these values are chosen to
// reproduce those outputs with realistic cavity numbers (g0/2pi = 120 MHz,
// kappa/2pi = 40 MHz split over two mirrors, cesium D2 line at 852.35 nm,
// n = 1 photon, Delta/2pi = 3.84 GHz).
inline CavityConfig cesium_preset() {
    constexpr double two_pi = 6.283185307179586476925287;
    CavityConfig c;
    c.g0 = two_pi * 120e6;
    c.n_photons = 1.0;
    c.delta = two_pi * 3.84e9;
    c.kappa1 = two_pi * 20e6;
    c.kappa2 = two_pi * 20e6;
    c.k_l = two_pi / 852.35e-9;
    c.gamma_free = two_pi * 5.22e6;
    c.mass = kCesiumMass;
    c.omega_trap = two_pi * 180e3;
    c.eta_det = 1.0;
    return c;
}

} // namespace cpm
