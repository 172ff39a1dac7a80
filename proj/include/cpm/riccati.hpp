#pragma once

// Deterministic dynamics of the conditioned covariance: the matrix Riccati
// flow dV/dt = omega (C - V B V - D V - V A), its analytic steady states,
// the Reid linearization V = W U^{-1}, the closed-form position variance for
// isotropic initial data at phi = 0, and collapse-time diagnostics.
//
// Conventions: time is measured in units of 1/omega inside the flow; the
// detection-imperfection factor q >= 1 scales the unconditioned momentum
// diffusion (constant term 2 q^2 / r at phi = 0) while the conditioning
// terms keep the detected strength. Heterodyne detection maps onto the
// phi = 0 homodyne flow with r -> 2r, sharing the same code path.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"
#include "cpm/rk45.hpp"

namespace cpm {

struct Mat2 {
    double m00 = 0.0, m01 = 0.0, m10 = 0.0, m11 = 0.0;

    friend Mat2 operator*(const Mat2& a, const Mat2& b) {
        return Mat2{a.m00 * b.m00 + a.m01 * b.m10, a.m00 * b.m01 + a.m01 * b.m11,
                    a.m10 * b.m00 + a.m11 * b.m10, a.m10 * b.m01 + a.m11 * b.m11};
    }
    friend Mat2 operator+(const Mat2& a, const Mat2& b) {
        return Mat2{a.m00 + b.m00, a.m01 + b.m01, a.m10 + b.m10, a.m11 + b.m11};
    }
    friend Mat2 operator-(const Mat2& a, const Mat2& b) {
        return Mat2{a.m00 - b.m00, a.m01 - b.m01, a.m10 - b.m10, a.m11 - b.m11};
    }
    Mat2 transpose() const { return Mat2{m00, m10, m01, m11}; }
    double det() const { return m00 * m11 - m01 * m10; }
    double max_abs() const {
        return std::max(std::max(std::abs(m00), std::abs(m01)), std::max(std::abs(m10), std::abs(m11)));
    }
};

inline Mat2 to_mat(const Covariance& c) { return Mat2{c.xx, c.xp, c.xp, c.pp}; }
inline Covariance to_cov(const Mat2& m) { return Covariance{m.m00, m.m11, 0.5 * (m.m01 + m.m10)}; }

// Coefficient matrices of dV/dt = omega (C - V B V - D V - V A), D = A^T.
// Expanded against the scalar moment equations:
//   dV_xx/dt = 2 V_xp - (2 cos^2 phi / r) V_xx^2
//   dV_pp/dt = -2 (1 - sin 2phi / r) V_xp + (2/r)(cos^2 phi + q^2 - 1)
//              - (2 cos^2 phi / r) V_xp^2
//   dV_xp/dt = V_pp - (1 - sin 2phi / r) V_xx - (2 cos^2 phi / r) V_xx V_xp
// which fixes A = [[0, 1 - sin 2phi / r], [-1, 0]], B = diag(2 cos^2 phi / r, 0)
// and C = diag(0, (2/r)(cos^2 phi + q^2 - 1)).
struct RiccatiCoeffs {
    Mat2 A, B, C, D;
    double omega = 1.0;

    static RiccatiCoeffs from_params(const ModelParams& p) {
        p.validate();
        const double r_eff = (p.mode == Mode::Heterodyne) ? 2.0 * p.r : p.r;
        const double phi_eff = (p.mode == Mode::Heterodyne) ? 0.0 : p.phi;
        const double c2 = std::cos(phi_eff) * std::cos(phi_eff);
        const double s2 = std::sin(2.0 * phi_eff);
        RiccatiCoeffs k;
        k.omega = p.omega;
        k.A = Mat2{0.0, 1.0 - s2 / r_eff, -1.0, 0.0};
        k.D = k.A.transpose();
        k.B = Mat2{2.0 * c2 / r_eff, 0.0, 0.0, 0.0};
        k.C = Mat2{0.0, 0.0, 0.0, (2.0 / r_eff) * (c2 + p.q * p.q - 1.0)};
        return k;
    }
};

// Riccati flow right-hand side, d/dt of (V_xx, V_pp, V_xp) in wall-clock time.
inline std::array<double, 3> riccati_rhs(const RiccatiCoeffs& k, const std::array<double, 3>& v) {
    const Mat2 V{v[0], v[2], v[2], v[1]};
    const Mat2 R = k.C - V * k.B * V - k.D * V - V * k.A;
    return {k.omega * R.m00, k.omega * R.m11, k.omega * 0.5 * (R.m01 + R.m10)};
}

// Damping/oscillation rates of the phi = 0 relaxation: b and c from
//   b^2 = (sqrt(1 + 4 q^2 / r^2) - 1)/2,  c^2 = (sqrt(1 + 4 q^2 / r^2) + 1)/2,
// with c = q / V_xx^ss. Computed via the conjugate form to avoid cancellation
// for large r.
struct RiccatiSolution {
    double b = 0.0;
    double c = 0.0;
    double q = 1.0;
    double v0 = 1.0;

    static RiccatiSolution from_params(double r, double q, double v0 = 1.0) {
        const double u = 4.0 * q * q / (r * r);
        const double s_minus_1 = u / (1.0 + std::sqrt(1.0 + u));
        RiccatiSolution sol;
        sol.b = std::sqrt(0.5 * s_minus_1);
        sol.c = std::sqrt(0.5 * (s_minus_1 + 2.0));
        sol.q = q;
        sol.v0 = v0;
        return sol;
    }
};

// Analytic phi = 0 steady state (general q; the ideal-detection case is q = 1):
//   V_xp = (r/2)(sqrt(1 + 4 q^2/r^2) - 1),  V_xx = sqrt(r V_xp),
//   V_pp = V_xx sqrt(1 + 4 q^2/r^2),        with area A = q exactly.
inline Covariance steady_state_phi0(double r, double q) {
    const double u = 4.0 * q * q / (r * r);
    const double s_minus_1 = u / (1.0 + std::sqrt(1.0 + u));
    const double vxp = 0.5 * r * s_minus_1;
    const double vxx = std::sqrt(r * vxp);
    const double vpp = vxx * (s_minus_1 + 1.0);
    return Covariance{vxx, vpp, vxp};
}

namespace riccati_detail {

struct FlowScalars {
    double beta;  // 2 cos^2 phi / r
    double gamma; // (2/r)(cos^2 phi + q^2 - 1)
    double a1;    // 1 - sin 2phi / r
};

inline FlowScalars scalars(const RiccatiCoeffs& k) { return {k.B.m00, k.C.m11, k.A.m01}; }

// Scalars straight from (r, phi, q). phi may be negative here; the flow is
// pi-periodic and only continuation uses this entry point.
inline FlowScalars scalars_from(double r, double phi, double q) {
    const double c2 = std::cos(phi) * std::cos(phi);
    return {2.0 * c2 / r, (2.0 / r) * (c2 + q * q - 1.0), 1.0 - std::sin(2.0 * phi) / r};
}

// One damped Newton solve of the algebraic Riccati equation at fixed
// coefficients; seeds must be close enough to track the stabilizing branch.
// Convergence is judged relative to the size of the flow's individual terms,
// which can be huge (|a1| ~ 1/r) when the measurement dominates.
inline std::optional<Covariance> are_newton(const FlowScalars& f, Covariance v) {
    auto residual = [&](const Covariance& c) {
        return std::array<double, 3>{2.0 * c.xp - f.beta * c.xx * c.xx,
                                     -2.0 * f.a1 * c.xp + f.gamma - f.beta * c.xp * c.xp,
                                     c.pp - f.a1 * c.xx - f.beta * c.xx * c.xp};
    };
    auto norm = [](const std::array<double, 3>& r) {
        return std::max(std::abs(r[0]), std::max(std::abs(r[1]), std::abs(r[2])));
    };
    auto term_scale = [&](const Covariance& c) {
        return std::max({1.0, std::abs(2.0 * c.xp), f.beta * c.xx * c.xx, std::abs(2.0 * f.a1 * c.xp),
                         std::abs(f.gamma), std::abs(c.pp), std::abs(f.a1 * c.xx),
                         std::abs(f.beta * c.xx * c.xp)});
    };
    auto R = residual(v);
    for (int it = 0; it < 120; ++it) {
        if (norm(R) < 1e-13 * term_scale(v)) return v;
        // Solve J dv = -R for dv = (dxx, dpp, dxp).
        const double j00 = -2.0 * f.beta * v.xx, j02 = 2.0;
        const double j12 = -2.0 * f.a1 - 2.0 * f.beta * v.xp;
        const double j20 = -f.a1 - f.beta * v.xp, j22 = -f.beta * v.xx;
        // Rows: [j00 0 j02; 0 0 j12; j20 1 j22].
        if (j12 == 0.0 || j00 == 0.0) return std::nullopt;
        const double dxp = -R[1] / j12;
        const double dxx = (-R[0] - j02 * dxp) / j00;
        const double dpp = -R[2] - j20 * dxx - j22 * dxp;
        double lam = 1.0;
        Covariance vn = v;
        std::array<double, 3> Rn = R;
        bool improved = false;
        for (int back = 0; back < 60; ++back) {
            vn = Covariance{v.xx + lam * dxx, v.pp + lam * dpp, v.xp + lam * dxp};
            Rn = residual(vn);
            if (norm(Rn) < norm(R)) {
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if (!improved) {
            // Stalled at the floating-point floor of the residual.
            if (norm(R) < 1e-9 * term_scale(v)) return v;
            return std::nullopt;
        }
        v = vn;
        R = Rn;
    }
    return std::nullopt;
}

} // namespace riccati_detail

// Steady conditioned covariance for arbitrary local-oscillator phase.
// The flow depends on phi only through cos^2 phi and sin 2phi, so it is
// pi-periodic; phi = pi/2 (mod pi) has no steady state. Away from phi = 0 the
// fixed point is tracked by Newton continuation in phi seeded from the
// analytic phi = 0 solution.
inline Covariance steady_state(const ModelParams& params) {
    params.validate();
    const double r_eff = (params.mode == Mode::Heterodyne) ? 2.0 * params.r : params.r;
    const double phi_eff = (params.mode == Mode::Heterodyne) ? 0.0 : params.phi;

    constexpr double pi = 3.141592653589793238463;
    double p = std::fmod(phi_eff, pi);
    if (p > 0.5 * pi) p -= pi;
    if (std::abs(std::abs(p) - 0.5 * pi) < 1e-12)
        throw NoSteadyStateError("steady_state: no steady covariance at phi = pi/2 (mod pi)");

    Covariance v = steady_state_phi0(r_eff, params.q);
    if (p == 0.0) return v;

    int n = std::max(8, static_cast<int>(std::abs(p) / 0.01));
    for (int attempt = 0; attempt < 6; ++attempt) {
        Covariance w = v;
        bool ok = true;
        for (int k = 1; k <= n; ++k) {
            auto f = riccati_detail::scalars_from(r_eff, p * static_cast<double>(k) / n, params.q);
            auto next = riccati_detail::are_newton(f, w);
            if (!next || !next->positive_definite()) {
                ok = false;
                break;
            }
            w = *next;
        }
        if (ok) return w;
        n *= 2; // refine the continuation path and retry
    }
    throw NoSteadyStateError("steady_state: continuation failed to converge");
}

// Covariance path on a time grid (wall-clock times, grid.front() = initial time).
inline std::vector<Covariance> integrate_covariance(const RiccatiCoeffs& coeffs, const Covariance& v0,
                                                    std::span<const double> t_grid,
                                                    const IntegratorOptions& opt = {}) {
    if (!v0.positive_definite()) throw InvalidStateError("integrate_covariance: v0 must be positive definite");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw std::invalid_argument("integrate_covariance: t_grid must be strictly increasing");
    std::vector<Covariance> out(t_grid.size());
    integrate_grid<3>([&](double, const std::array<double, 3>& v) { return riccati_rhs(coeffs, v); },
                      std::array<double, 3>{v0.xx, v0.pp, v0.xp}, t_grid, opt,
                      [&](std::size_t i, const std::array<double, 3>& v) {
                          out[i] = Covariance{v[0], v[1], v[2]};
                      });
    return out;
}

// Reid linearization: with dU/dt = AU + BW, dW/dt = CU - DW (rates scaled by
// omega), U(0) = I, W(0) = V0, the Riccati solution is V(t) = W(t) U(t)^{-1}.
// U and W are jointly rescaled when they grow large; V is invariant under
// right-multiplication so the rescaling is exact.
inline std::vector<Covariance> reid_path(const RiccatiCoeffs& k, const Covariance& v0,
                                         std::span<const double> t_grid, const IntegratorOptions& opt = {}) {
    if (!v0.positive_definite()) throw InvalidStateError("reid_path: v0 must be positive definite");
    auto rhs = [&](double, const std::array<double, 8>& y) {
        const Mat2 U{y[0], y[1], y[2], y[3]};
        const Mat2 W{y[4], y[5], y[6], y[7]};
        const Mat2 dU = k.A * U + k.B * W;
        const Mat2 dW = k.C * U - k.D * W;
        const double w = k.omega;
        return std::array<double, 8>{w * dU.m00, w * dU.m01, w * dU.m10, w * dU.m11,
                                     w * dW.m00, w * dW.m01, w * dW.m10, w * dW.m11};
    };

    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw std::invalid_argument("reid_path: t_grid must be strictly increasing");

    std::vector<Covariance> out(t_grid.size());
    if (t_grid.empty()) return out;
    out[0] = v0;

    // Integrate segment by segment so the (U, W) pair can be renormalized.
    std::array<double, 8> y{1.0, 0.0, 0.0, 1.0, v0.xx, v0.xp, v0.xp, v0.pp};
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
        const double seg[2] = {t_grid[i], t_grid[i + 1]};
        integrate_grid<8>(rhs, y, std::span<const double>(seg, 2), opt,
                          [&](std::size_t j, const std::array<double, 8>& v) {
                              if (j == 1) y = v;
                          });
        const Mat2 U{y[0], y[1], y[2], y[3]};
        const Mat2 W{y[4], y[5], y[6], y[7]};
        const double detU = U.det();
        const double scaleU = U.max_abs();
        if (!(std::abs(detU) > 1e-12 * scaleU * scaleU))
            throw NearSingularError("reid_path: U(t) is near singular; bisect the requested times");
        const Mat2 adjU{U.m11, -U.m01, -U.m10, U.m00};
        const Mat2 V = W * adjU;
        out[i + 1] = to_cov(Mat2{V.m00 / detU, V.m01 / detU, V.m10 / detU, V.m11 / detU});
        if (scaleU > 1e100)
            for (auto& c : y) c /= scaleU;
    }
    return out;
}

inline Covariance reid_solution(const RiccatiCoeffs& k, const Covariance& v0, double t,
                                const IntegratorOptions& opt = {}) {
    if (t == 0.0) return v0;
    const double grid[2] = {0.0, t};
    return reid_path(k, v0, std::span<const double>(grid, 2), opt).back();
}

// Closed-form position variance for phi = 0, V(0) = (V0, V0, 0), time in
// units of 1/omega:
//   V_xx(t) = [ q^2 V0 (c^2 cosh 2bt + b^2 cos 2ct)
//               + (q/2)(V0^2 + q^2)(c sinh 2bt - b sin 2ct) ]
//           / [ q^2 (b^2 + c^2) + q V0 (c^3 sinh 2bt + b^3 sin 2ct)
//               + (V0^2 + q^2)(c^2 sinh^2 bt - b^2 sin^2 ct) ].
// For 2bt > 50 the oscillatory corrections are below double precision and the
// expression reduces to the steady value q/c exactly, which also serves as
// the overflow guard.
inline double closed_form_vxx(double r, double q, double v0, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("closed_form_vxx: t must be >= 0");
    const auto sol = RiccatiSolution::from_params(r, q, v0);
    const double b = sol.b, c = sol.c;
    if (2.0 * b * t > 50.0) return q / c;
    const double ch = std::cosh(2.0 * b * t), sh = std::sinh(2.0 * b * t);
    const double co = std::cos(2.0 * c * t), si = std::sin(2.0 * c * t);
    const double shb = std::sinh(b * t), sic = std::sin(c * t);
    const double num = q * q * v0 * (c * c * ch + b * b * co) + 0.5 * q * (v0 * v0 + q * q) * (c * sh - b * si);
    const double den = q * q * (b * b + c * c) + q * v0 * (c * c * c * sh + b * b * b * si) +
                       (v0 * v0 + q * q) * (c * c * shb * shb - b * b * sic * sic);
    return num / den;
}

// Collapse time tau = 2 / (b omega): the timescale on which the conditioned
// covariance reaches its steady state and the record determines the state.
// Heterodyne detection halves the signal-to-noise, so r is doubled first.
inline double collapse_time(double r, double omega, double q = 1.0, Mode mode = Mode::Homodyne) {
    const double r_eff = (mode == Mode::Heterodyne) ? 2.0 * r : r;
    const auto sol = RiccatiSolution::from_params(r_eff, q);
    return 2.0 / (sol.b * omega);
}

inline double collapse_time(const ModelParams& p) { return collapse_time(p.r, p.omega, p.q, p.mode); }

} // namespace cpm
