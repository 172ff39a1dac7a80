#pragma once

// Continuous-time Kalman-Bucy filter for a noisy classical harmonic
// oscillator with correlated process and observation noise:
//
//   dx/dt = omega p
//   dp/dt = -omega x + sqrt(2 omega / s) eps      E[eps eps'] = delta
//   dQ/dt = a x + sqrt(r / 2 omega) eta           E[eps eta'] = f delta
//
// The posterior-moment flow (per unit omega) is
//   dV_xx = 2 V_xp - (2/r) a^2 V_xx^2
//   dV_pp = -2 (1 + 2af/sqrt(rs)) V_xp + 2/s - 2 f^2/s - (2/r) a^2 V_xp^2
//   dV_xp = V_pp - (1 + 2af/sqrt(rs)) V_xx - (2/r) a^2 V_xx V_xp
// and the mean gains on the normalized innovation are a sqrt(2 omega/r) V_xx
// and a sqrt(2 omega/r) V_xp + f sqrt(2 omega/s).
//
// Identifying s = r, a = cos(phi), f = -sin(phi) makes this flow coincide
// with the quantum conditioned-moment equations. This module deliberately
// shares no covariance code with the Riccati module so that the equivalence
// test compares two genuinely independent implementations.
//
// Naming: the conventional symbols r (observation noise) and s (process
// noise) collide with detection efficiency and linear entropy elsewhere in
// this library, so the fields are spelled obs_noise and proc_noise.

#include <cmath>
#include <optional>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"

namespace cpm {

struct ClassicalModel {
    double obs_noise = 1.0;  // r
    double proc_noise = 1.0; // s
    double gain = 1.0;       // a
    double corr = 0.0;       // f in [-1, 1]
    double omega = 1.0;

    void validate() const {
        if (!(obs_noise > 0.0)) throw std::invalid_argument("ClassicalModel: obs_noise must be > 0");
        if (!(proc_noise > 0.0)) throw std::invalid_argument("ClassicalModel: proc_noise must be > 0");
        if (!(std::abs(corr) <= 1.0)) throw std::invalid_argument("ClassicalModel: |corr| must be <= 1");
        if (!(omega > 0.0)) throw std::invalid_argument("ClassicalModel: omega must be > 0");
    }
};

// Identification of the quantum conditioned dynamics at local-oscillator
// phase phi with a classical filtering problem.
inline ClassicalModel identify_from_quantum(double phi, double r, double omega = 1.0) {
    return ClassicalModel{r, r, std::cos(phi), -std::sin(phi), omega};
}

namespace kalman_detail {

struct Flow {
    double cross; // 1 + 2af/sqrt(rs)
    double diff;  // 2/s - 2 f^2/s
    double a2r;   // (2/r) a^2
};

inline Flow flow(const ClassicalModel& m) {
    return Flow{1.0 + 2.0 * m.gain * m.corr / std::sqrt(m.obs_noise * m.proc_noise),
                2.0 / m.proc_noise - 2.0 * m.corr * m.corr / m.proc_noise,
                (2.0 / m.obs_noise) * m.gain * m.gain};
}

} // namespace kalman_detail

// One Euler step of the filter driven by the raw increment dQ. The mean
// update treats x implicitly in its own gain, mirroring the quantum stepper,
// so both sides of the equivalence check discretize identically.
inline GaussianState kalman_step(const ClassicalModel& m, const GaussianState& est, double dq, double dt) {
    if (!est.covariance().positive_definite())
        throw InvalidStateError("kalman_step: estimate covariance must be positive definite");
    const double w = m.omega;
    const double sq_r = std::sqrt(2.0 * w / m.obs_noise);
    const double sq_s = std::sqrt(2.0 * w / m.proc_noise);
    // Gains on (dQ - a x dt): the normalized-innovation gains times sqrt(2w/r).
    const double kx = sq_r * (m.gain * sq_r * est.v_xx);
    const double kp = sq_r * (m.gain * sq_r * est.v_xp + m.corr * sq_s);

    GaussianState out = est;
    const double xn = (est.mean_x + w * est.mean_p * dt + kx * dq) / (1.0 + kx * m.gain * dt);
    const double pn = est.mean_p - w * xn * dt + kp * (dq - m.gain * xn * dt);
    if (!std::isfinite(xn) || !std::isfinite(pn)) throw SimulationError("kalman_step: non-finite mean", 0);
    out.mean_x = xn;
    out.mean_p = pn;

    const auto f = kalman_detail::flow(m);
    out.v_xx = est.v_xx + w * dt * (2.0 * est.v_xp - f.a2r * est.v_xx * est.v_xx);
    out.v_pp = est.v_pp + w * dt * (-2.0 * f.cross * est.v_xp + f.diff - f.a2r * est.v_xp * est.v_xp);
    out.v_xp = est.v_xp + w * dt * (est.v_pp - f.cross * est.v_xx - f.a2r * est.v_xx * est.v_xp);
    return out;
}

// Steady posterior covariance of the classical filter, via damped Newton on
// the algebraic equations with continuation in the correlation f from the
// uncorrelated analytic seed. No steady state exists for gain = 0.
inline std::optional<Covariance> classical_steady_state(const ClassicalModel& m) {
    m.validate();
    if (m.gain == 0.0) return std::nullopt;

    auto solve_at = [&](double fcorr, Covariance v) -> std::optional<Covariance> {
        ClassicalModel local = m;
        local.corr = fcorr;
        const auto fl = kalman_detail::flow(local);
        auto residual = [&](const Covariance& c) {
            return std::array<double, 3>{2.0 * c.xp - fl.a2r * c.xx * c.xx,
                                         -2.0 * fl.cross * c.xp + fl.diff - fl.a2r * c.xp * c.xp,
                                         c.pp - fl.cross * c.xx - fl.a2r * c.xx * c.xp};
        };
        auto norm3 = [](const std::array<double, 3>& r) {
            return std::max(std::abs(r[0]), std::max(std::abs(r[1]), std::abs(r[2])));
        };
        auto R = residual(v);
        for (int it = 0; it < 120; ++it) {
            const double scale = std::max({1.0, v.xx, v.pp, std::abs(v.xp)});
            if (norm3(R) < 1e-14 * scale) return v;
            const double j00 = -2.0 * fl.a2r * v.xx;
            const double j12 = -2.0 * fl.cross - 2.0 * fl.a2r * v.xp;
            const double j20 = -fl.cross - fl.a2r * v.xp, j22 = -fl.a2r * v.xx;
            if (j12 == 0.0 || j00 == 0.0) return std::nullopt;
            const double dxp = -R[1] / j12;
            const double dxx = (-R[0] - 2.0 * dxp) / j00;
            const double dpp = -R[2] - j20 * dxx - j22 * dxp;
            double lam = 1.0;
            Covariance vn;
            std::array<double, 3> Rn{};
            for (int back = 0;; ++back) {
                vn = Covariance{v.xx + lam * dxx, v.pp + lam * dpp, v.xp + lam * dxp};
                Rn = residual(vn);
                if (norm3(Rn) < norm3(R)) break;
                lam *= 0.5;
                if (back >= 60) return std::nullopt;
            }
            v = vn;
            R = Rn;
        }
        return std::nullopt;
    };

    // Uncorrelated seed (f = 0): V_xp = r (sqrt(1 + 4 a^2/(r s)) - 1) / (2 a^2),
    // V_xx = sqrt(r V_xp)/|a|, V_pp = V_xx (1 + (2 a^2/r) V_xp).
    const double r = m.obs_noise, s = m.proc_noise, a = m.gain;
    const double u = 4.0 * a * a / (r * s);
    const double sm1 = u / (1.0 + std::sqrt(1.0 + u));
    Covariance v;
    v.xp = r * sm1 / (2.0 * a * a);
    v.xx = std::sqrt(r * v.xp) / std::abs(a);
    v.pp = v.xx * (1.0 + (2.0 * a * a / r) * v.xp);

    const int n = std::max(8, static_cast<int>(std::abs(m.corr) / 0.01));
    for (int k = 1; k <= n; ++k) {
        auto next = solve_at(m.corr * static_cast<double>(k) / n, v);
        if (!next || !next->positive_definite()) return std::nullopt;
        v = *next;
    }
    return v;
}

// Measurement-disturbance check: a classical model reproduces a quantum
// filter only if its steady posterior keeps A >= 1. Too little process noise
// (proc_noise large at fixed obs_noise) lets the observer pin the state
// beyond the Heisenberg floor.
struct AdmissibilityReport {
    bool has_steady_state = false;
    Covariance steady;
    double steady_area = 0.0;
    bool admissible = false;
};

inline AdmissibilityReport admissibility_report(const ClassicalModel& m, double tol = kAnalyticTol) {
    AdmissibilityReport rep;
    const auto v = classical_steady_state(m);
    if (!v) return rep;
    rep.has_steady_state = true;
    rep.steady = *v;
    rep.steady_area = std::sqrt(std::max(0.0, v->det()));
    rep.admissible = rep.steady_area >= 1.0 - tol;
    return rep;
}

} // namespace cpm
