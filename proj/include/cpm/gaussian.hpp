#pragma once

// Gaussian conditioned states in the dimensionless oscillator units
// (position scaled by sqrt(hbar/2 m omega), momentum by sqrt(hbar m omega / 2),
// so a coherent state has unit variances and the Heisenberg bound reads
// V_xx V_pp - V_xp^2 >= 1).

#include <cmath>
#include <string>

#include "cpm/errors.hpp"

namespace cpm {

// Symmetric 2x2 covariance in scaled units.
struct Covariance {
    double xx = 1.0;
    double pp = 1.0;
    double xp = 0.0;

    double det() const { return xx * pp - xp * xp; }
    bool positive_definite() const { return xx > 0.0 && pp > 0.0 && det() > 0.0; }
};

inline Covariance isotropic(double v0) { return Covariance{v0, v0, 0.0}; }

struct GaussianState {
    double mean_x = 0.0;
    double mean_p = 0.0;
    double v_xx = 1.0;
    double v_pp = 1.0;
    double v_xp = 0.0;

    Covariance covariance() const { return Covariance{v_xx, v_pp, v_xp}; }
    void set_covariance(const Covariance& c) { v_xx = c.xx; v_pp = c.pp; v_xp = c.xp; }
};

inline GaussianState make_state(double x, double p, const Covariance& c) {
    return GaussianState{x, p, c.xx, c.pp, c.xp};
}

enum class Mode { Homodyne, Heterodyne };

inline std::string to_string(Mode m) { return m == Mode::Homodyne ? "homodyne" : "heterodyne"; }

// Model parameters. `r` is the ratio of harmonic to measurement dynamics
// (m omega^2 / 2 hbar alpha); small r means strong measurement. `q` is the
// detection-imperfection factor sqrt(1 + beta/alpha) >= 1 and equals the
// steady-state phase-space area at phi = 0.
struct ModelParams {
    double omega = 1.0;
    double r = 1.0;
    double phi = 0.0;
    double q = 1.0;
    Mode mode = Mode::Homodyne;

    void validate() const {
        if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("ModelParams: r must be finite and > 0");
        if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("ModelParams: omega must be finite and > 0");
        if (!(q >= 1.0) || !std::isfinite(q)) throw std::invalid_argument("ModelParams: q must be >= 1");
        constexpr double two_pi = 6.283185307179586476925287;
        if (!(phi >= 0.0) || !(phi < two_pi)) throw std::invalid_argument("ModelParams: phi must lie in [0, 2pi)");
    }
};

// Default admissibility tolerances: analytic paths are limited by round-off,
// stochastic paths by integrator drift.
inline constexpr double kAnalyticTol = 1e-9;
inline constexpr double kSdeTol = 1e-6;

// Phase-space area A = sqrt(V_xx V_pp - V_xp^2); A = 1 is a pure state.
inline double phase_space_area(const Covariance& c) {
    if (!(c.xx > 0.0) || !(c.pp > 0.0))
        throw InvalidStateError("phase_space_area: diagonal variances must be positive");
    const double d = c.det();
    if (d <= 0.0)
        throw InvalidStateError("phase_space_area: covariance is not positive definite");
    return std::sqrt(d);
}

inline double phase_space_area(const GaussianState& s) { return phase_space_area(s.covariance()); }

inline bool is_quantum_admissible(const Covariance& c, double tol) {
    return c.xx > 0.0 && c.pp > 0.0 && c.det() >= 1.0 - tol;
}

inline bool is_quantum_admissible(const GaussianState& s, double tol = kSdeTol) {
    return is_quantum_admissible(s.covariance(), tol);
}

namespace detail {
inline double require_area(double area) {
    if (!(area >= 1.0 - kAnalyticTol))
        throw InvalidQuantumStateError("entropy: area " + std::to_string(area) + " below the Heisenberg floor");
    return area < 1.0 ? 1.0 : area;
}
} // namespace detail

// Linear entropy s = 1 - 1/A, in [0, 1).
inline double linear_entropy_from_area(double area) {
    return 1.0 - 1.0 / detail::require_area(area);
}

inline double linear_entropy(const GaussianState& s) {
    return linear_entropy_from_area(phase_space_area(s));
}

// Von Neumann entropy of a single-mode Gaussian state (natural log):
//   S = ((A+1)/2) ln(A+1) - ((A-1)/2) ln(A-1) - ln 2.
// Rewritten in e = A-1 as (1 + e/2) log1p(e/2) + (e/2)(ln 2 - ln e), which is
// exact for all e > 0 and has the correct limit S -> 0 as A -> 1 without
// evaluating ln(0).
inline double von_neumann_entropy_from_area(double area) {
    const double e = detail::require_area(area) - 1.0;
    if (e == 0.0) return 0.0;
    return (1.0 + 0.5 * e) * std::log1p(0.5 * e) + 0.5 * e * (std::log(2.0) - std::log(e));
}

inline double von_neumann_entropy(const GaussianState& s) {
    return von_neumann_entropy_from_area(phase_space_area(s));
}

} // namespace cpm
