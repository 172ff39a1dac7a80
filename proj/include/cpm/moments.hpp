#pragma once

// Stochastic simulation and filtering of the conditioned means. The
// covariance is deterministic and decoupled, so simulate() and filter() take
// it from the Riccati path on the step grid and only the two means are driven
// by noise. Both directions share one innovation-form update:
//
//   dQ residual   dQ - cos(phi) x dt
//   x update      x+ = (x + omega p dt + K_x dQ) / (1 + K_x cos(phi) dt)
//   p update      p+ = p - omega x+ dt + K_p (dQ - cos(phi) x+ dt)  [- sqrt(g) dQ2]
//
// with K_x = g cos(phi) V_xx, K_p = g (cos(phi) V_xp - sin(phi)), g = 2 omega / r.
// Treating x implicitly in its own gain keeps the update stable for nearly
// flat priors (V ~ 1e10), where the explicit Euler gain K_x dt >> 1 diverges;
// for a flat prior the first step then reproduces the exact Bayesian mean
// jump to the measurement-implied position. The simulator generates dQ from
// its own state and applies the identical update, so replaying a record
// through filter() with the same prior retraces the state path bit for bit.

#include <array>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"
#include "cpm/record.hpp"
#include "cpm/riccati.hpp"
#include "cpm/rng.hpp"

namespace cpm {

inline double default_dt(const ModelParams& p) {
    return 1e-3 * std::min(1.0, std::min(p.r, 1.0 / p.q));
}

struct TrajectoryOutput {
    std::vector<double> times;
    std::vector<GaussianState> states;
    MeasurementRecord record;
    // For synthetic data the "ground truth" is the generating filter's own
    // conditioned mean path; quantum mechanics offers no noise-free trajectory.
    std::vector<std::array<double, 2>> true_path;
};

namespace moments_detail {

struct StepGains {
    bool heterodyne;
    double omega;
    double cphi;   // cos(phi); 1 for heterodyne
    double sphi;   // sin(phi); 0 for heterodyne
    double g;      // 2 omega / r_eff
    double sqrt_g; // noise weight of the dQ2 feedthrough

    static StepGains from_params(const ModelParams& p) {
        StepGains s;
        s.heterodyne = p.mode == Mode::Heterodyne;
        const double r_eff = s.heterodyne ? 2.0 * p.r : p.r;
        s.omega = p.omega;
        s.cphi = s.heterodyne ? 1.0 : std::cos(p.phi);
        s.sphi = s.heterodyne ? 0.0 : std::sin(p.phi);
        s.g = 2.0 * p.omega / r_eff;
        s.sqrt_g = std::sqrt(s.g);
        return s;
    }
};

inline void step_means(const StepGains& s, double& x, double& p, const Covariance& v, double dq1, double dq2,
                       double dt) {
    const double kx = s.g * s.cphi * v.xx;
    const double kp = s.g * (s.cphi * v.xp - s.sphi);
    const double xn = (x + s.omega * p * dt + kx * dq1) / (1.0 + kx * s.cphi * dt);
    double pn = p - s.omega * xn * dt + kp * (dq1 - s.cphi * xn * dt);
    if (s.heterodyne) pn -= s.sqrt_g * dq2;
    x = xn;
    p = pn;
}

} // namespace moments_detail

// Generate a conditioned trajectory and its measurement record.
inline TrajectoryOutput simulate(const ModelParams& params, const GaussianState& initial, std::size_t n_steps,
                                 double dt, std::uint64_t seed, std::uint64_t stream = 0) {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
    if (!is_quantum_admissible(initial, kSdeTol * params.q * params.q))
        throw InvalidQuantumStateError("simulate: initial state is not admissible");

    TrajectoryOutput out;
    out.times.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) out.times[k] = static_cast<double>(k) * dt;
    const auto vpath = integrate_covariance(RiccatiCoeffs::from_params(params), initial.covariance(), out.times);

    const auto gains = moments_detail::StepGains::from_params(params);
    const double noise_scale = 1.0 / gains.sqrt_g; // sqrt(r_eff / 2 omega)
    const double sdt = std::sqrt(dt);

    out.record.dt = dt;
    out.record.seed = seed;
    out.record.params = params;
    out.record.increments_q1.resize(n_steps);
    if (gains.heterodyne) out.record.increments_q2.resize(n_steps);

    out.states.resize(n_steps + 1);
    out.true_path.resize(n_steps + 1);
    double x = initial.mean_x, p = initial.mean_p;
    out.states[0] = make_state(x, p, vpath[0]);
    out.true_path[0] = {x, p};
    for (std::size_t k = 0; k < n_steps; ++k) {
        const auto z = normal_pair(seed, stream, k);
        const double dw1 = z[0] * sdt;
        const double dq1 = gains.cphi * x * dt + noise_scale * dw1;
        double dq2 = 0.0;
        if (gains.heterodyne) {
            dq2 = z[1] * sdt; // dQ2 = dW2: an information-free quadrature
            out.record.increments_q2[k] = dq2;
        }
        out.record.increments_q1[k] = dq1;
        moments_detail::step_means(gains, x, p, vpath[k], dq1, dq2, dt);
        if (!std::isfinite(x) || !std::isfinite(p)) throw SimulationError("simulate: non-finite mean", k);
        out.states[k + 1] = make_state(x, p, vpath[k + 1]);
        out.true_path[k + 1] = {x, p};
    }
    return out;
}

// Reconstruct the conditioned path from a record and a prior.
inline TrajectoryOutput filter(const MeasurementRecord& record, const GaussianState& prior) {
    record.validate();
    const ModelParams& params = record.params;
    if (!is_quantum_admissible(prior, kSdeTol * params.q * params.q))
        throw InvalidQuantumStateError("filter: prior is not admissible");

    const std::size_t n_steps = record.steps();
    TrajectoryOutput out;
    out.record = record;
    out.times.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) out.times[k] = static_cast<double>(k) * record.dt;
    const auto vpath = integrate_covariance(RiccatiCoeffs::from_params(params), prior.covariance(), out.times);

    const auto gains = moments_detail::StepGains::from_params(params);
    out.states.resize(n_steps + 1);
    double x = prior.mean_x, p = prior.mean_p;
    out.states[0] = make_state(x, p, vpath[0]);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double dq2 = gains.heterodyne ? record.increments_q2[k] : 0.0;
        moments_detail::step_means(gains, x, p, vpath[k], record.increments_q1[k], dq2, record.dt);
        if (!std::isfinite(x) || !std::isfinite(p)) throw SimulationError("filter: non-finite mean", k);
        out.states[k + 1] = make_state(x, p, vpath[k + 1]);
    }
    return out;
}

// As above, but refuse records that were not produced under `expected`.
inline TrajectoryOutput filter(const MeasurementRecord& record, const GaussianState& prior,
                               const ModelParams& expected) {
    const ModelParams& rp = record.params;
    if (rp.mode != expected.mode || rp.phi != expected.phi || rp.r != expected.r || rp.q != expected.q ||
        rp.omega != expected.omega)
        throw IncompatibleRecordError("filter: record parameters do not match the expected model");
    return filter(record, prior);
}

// Normalized innovations sqrt(2 omega / r_eff) (dQ1 - cos(phi) x dt) recovered
// by replaying the record; for a correctly primed filter these are the
// generating Wiener increments, i.i.d. N(0, dt).
inline std::vector<double> innovations(const MeasurementRecord& record, const GaussianState& prior) {
    const auto traj = filter(record, prior);
    const auto gains = moments_detail::StepGains::from_params(record.params);
    std::vector<double> out(record.steps());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = gains.sqrt_g * (record.increments_q1[k] - gains.cphi * traj.states[k].mean_x * record.dt);
    return out;
}

// One Euler step of the full conditioned-moment equations driven by a raw
// record increment: means via the shared innovation update, covariance via
// explicit Euler of the scalar moment flow. This is the per-step face of the
// quantum dynamics that the classical Kalman filter is checked against;
// simulate()/filter() instead take the covariance from the Riccati path.
inline GaussianState quantum_moment_step(const ModelParams& params, const GaussianState& state, double dq1,
                                         double dq2, double dt) {
    const auto gains = moments_detail::StepGains::from_params(params);
    GaussianState out = state;
    double x = state.mean_x, p = state.mean_p;
    moments_detail::step_means(gains, x, p, state.covariance(), dq1, dq2, dt);
    if (!std::isfinite(x) || !std::isfinite(p)) throw SimulationError("quantum_moment_step: non-finite mean", 0);
    out.mean_x = x;
    out.mean_p = p;

    const double r_eff = gains.heterodyne ? 2.0 * params.r : params.r;
    const double c2 = gains.cphi * gains.cphi;
    const double s2r = std::sin(2.0 * (gains.heterodyne ? 0.0 : params.phi)) / r_eff;
    const double w = params.omega;
    out.v_xx = state.v_xx + w * dt * (2.0 * state.v_xp - (2.0 / r_eff) * c2 * state.v_xx * state.v_xx);
    out.v_pp = state.v_pp + w * dt * (-2.0 * (1.0 - s2r) * state.v_xp +
                                      (2.0 / r_eff) * (c2 + params.q * params.q - 1.0) -
                                      (2.0 / r_eff) * c2 * state.v_xp * state.v_xp);
    out.v_xp = state.v_xp + w * dt * (state.v_pp - (1.0 - s2r) * state.v_xx -
                                      (2.0 / r_eff) * c2 * state.v_xx * state.v_xp);
    return out;
}

// Unconditioned moments at time t (analytic). The unconditioned evolution
// does not depend on the detection phase: means rotate at omega and the
// covariance carries secular diffusion 2 q^2 omega / r in the trace plus a
// rotating traceless part:
//   trace T(t)   = T0 + (2 q^2 omega / r) t
//   u = Vxx-Vpp  : (u, 2(v - v*)) rotates at 2 omega, v* = q^2 / 2r.
inline GaussianState unconditioned_moments(const ModelParams& params, const GaussianState& initial, double t) {
    params.validate();
    const double w = params.omega, r = params.r, q = params.q;
    const double cw = std::cos(w * t), sw = std::sin(w * t);
    const double c2 = std::cos(2.0 * w * t), s2 = std::sin(2.0 * w * t);

    GaussianState out;
    out.mean_x = initial.mean_x * cw + initial.mean_p * sw;
    out.mean_p = -initial.mean_x * sw + initial.mean_p * cw;

    const double trace = initial.v_xx + initial.v_pp + (2.0 * q * q * w / r) * t;
    const double vstar = q * q / (2.0 * r);
    const double u0 = initial.v_xx - initial.v_pp;
    const double v0 = initial.v_xp;
    const double u = u0 * c2 + 2.0 * (v0 - vstar) * s2;
    const double v = vstar + (v0 - vstar) * c2 - 0.5 * u0 * s2;
    out.v_xx = 0.5 * (trace + u);
    out.v_pp = 0.5 * (trace - u);
    out.v_xp = v;
    return out;
}

// ------------------------------------------------------------------
// Ensemble machinery: embarrassingly parallel trajectories with a
// deterministic (pairwise, index-ordered) reduction.
// ------------------------------------------------------------------

inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                         unsigned max_threads = 0) {
    unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
    if (hw < 1) hw = 1;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, n ? n : 1));
    if (workers <= 1) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(body, lo, hi);
    }
    for (auto& th : pool) th.join();
}

// Pairwise summation over an index-ordered array; independent of thread count.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

struct EnsembleMoments {
    double t = 0.0;
    double mean_x = 0.0, mean_p = 0.0;
    double cov_xx = 0.0, cov_pp = 0.0, cov_xp = 0.0; // covariance of the conditioned means
};

struct EnsembleResult {
    std::vector<EnsembleMoments> checkpoints;
    std::vector<Covariance> conditioned; // shared deterministic covariance at the checkpoints
};

// Means-only ensemble over `n_traj` trajectories (stream = trajectory index),
// sampled at the given step indices.
inline EnsembleResult ensemble_statistics(const ModelParams& params, const GaussianState& initial,
                                          std::size_t n_steps, double dt, std::uint64_t seed,
                                          std::size_t n_traj, const std::vector<std::size_t>& checkpoint_steps,
                                          unsigned max_threads = 0) {
    params.validate();
    std::vector<double> times(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) times[k] = static_cast<double>(k) * dt;
    const auto vpath = integrate_covariance(RiccatiCoeffs::from_params(params), initial.covariance(), times);
    const auto gains = moments_detail::StepGains::from_params(params);
    const double noise_scale = 1.0 / gains.sqrt_g;
    const double sdt = std::sqrt(dt);

    const std::size_t nc = checkpoint_steps.size();
    std::vector<double> xs(nc * n_traj), ps(nc * n_traj); // [checkpoint][traj]

    parallel_for(n_traj, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t traj = lo; traj < hi; ++traj) {
            double x = initial.mean_x, p = initial.mean_p;
            std::size_t ci = 0;
            while (ci < nc && checkpoint_steps[ci] == 0) {
                xs[ci * n_traj + traj] = x;
                ps[ci * n_traj + traj] = p;
                ++ci;
            }
            for (std::size_t k = 0; k < n_steps && ci < nc; ++k) {
                const auto z = normal_pair(seed, traj, k);
                const double dw1 = z[0] * sdt;
                const double dq1 = gains.cphi * x * dt + noise_scale * dw1;
                const double dq2 = gains.heterodyne ? z[1] * sdt : 0.0;
                moments_detail::step_means(gains, x, p, vpath[k], dq1, dq2, dt);
                while (ci < nc && checkpoint_steps[ci] == k + 1) {
                    xs[ci * n_traj + traj] = x;
                    ps[ci * n_traj + traj] = p;
                    ++ci;
                }
            }
        }
    }, max_threads);

    EnsembleResult res;
    res.checkpoints.resize(nc);
    res.conditioned.resize(nc);
    std::vector<double> wx(n_traj), wp(n_traj);
    for (std::size_t c = 0; c < nc; ++c) {
        const double* X = xs.data() + c * n_traj;
        const double* P = ps.data() + c * n_traj;
        const double inv_n = 1.0 / static_cast<double>(n_traj);
        const double mx = pairwise_sum(X, n_traj) * inv_n;
        const double mpv = pairwise_sum(P, n_traj) * inv_n;
        for (std::size_t i = 0; i < n_traj; ++i) {
            wx[i] = (X[i] - mx) * (X[i] - mx);
            wp[i] = (P[i] - mpv) * (P[i] - mpv);
        }
        const double inv_n1 = 1.0 / static_cast<double>(n_traj - 1);
        EnsembleMoments m;
        m.t = times[checkpoint_steps[c]];
        m.mean_x = mx;
        m.mean_p = mpv;
        m.cov_xx = pairwise_sum(wx) * inv_n1;
        m.cov_pp = pairwise_sum(wp) * inv_n1;
        for (std::size_t i = 0; i < n_traj; ++i) wx[i] = (X[i] - mx) * (P[i] - mpv);
        m.cov_xp = pairwise_sum(wx) * inv_n1;
        res.checkpoints[c] = m;
        res.conditioned[c] = vpath[checkpoint_steps[c]];
    }
    return res;
}

} // namespace cpm
