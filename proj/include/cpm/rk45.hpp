#pragma once

// Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.
// Steps are clipped to requested grid times, so grid output carries no
// interpolation error.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cpm/errors.hpp"

namespace cpm {

struct IntegratorOptions {
    double atol = 1e-12;
    double rtol = 1e-10;
    std::size_t max_steps = 50'000'000;
};

namespace rk45_detail {

// Dormand-Prince coefficients.
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b(5th) - b(4th), applied to k1..k7 for the embedded error estimate.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

} // namespace rk45_detail

// Integrates y' = rhs(t, y) across an ascending time grid; grid.front() is the
// initial time. `sink(i, y)` receives the state at grid[i] for every i
// (including i = 0). RHS signature: std::array<double,N> rhs(double t, const std::array<double,N>&).
template <std::size_t N, typename RHS, typename Sink>
void integrate_grid(RHS&& rhs, std::array<double, N> y, std::span<const double> grid, const IntegratorOptions& opt,
                    Sink&& sink) {
    using namespace rk45_detail;
    using Vec = std::array<double, N>;
    if (grid.empty()) return;

    auto finite = [](const Vec& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };

    double t = grid.front();
    sink(std::size_t{0}, y);
    if (!finite(y)) throw IntegrationError("integrate_grid: non-finite initial state", t);

    Vec k1 = rhs(t, y);
    bool k1_fresh = true;

    // Initial step heuristic: small relative to solution/derivative scale.
    double ynorm = 0.0, fnorm = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        ynorm = std::max(ynorm, std::abs(y[i]));
        fnorm = std::max(fnorm, std::abs(k1[i]));
    }
    double h = 0.01 * (std::max(ynorm, 1.0) / std::max(fnorm, 1.0));
    const double span = grid.back() - grid.front();
    if (span <= 0.0) {
        for (std::size_t i = 1; i < grid.size(); ++i) sink(i, y);
        return;
    }
    h = std::min(h, span);

    std::size_t next = 1;
    std::size_t steps = 0;
    while (next < grid.size()) {
        // Emit any grid points we are already standing on.
        while (next < grid.size() && grid[next] <= t) {
            sink(next, y);
            ++next;
        }
        if (next >= grid.size()) break;

        double target = grid[next];
        bool clipped = false;
        double h_try = h;
        if (t + h_try >= target) {
            h_try = target - t;
            clipped = true;
        }

        if (!k1_fresh) {
            k1 = rhs(t, y);
            k1_fresh = true;
        }

        Vec yt, k2, k3, k4, k5, k6, k7, y5;
        for (std::size_t i = 0; i < N; ++i) yt[i] = y[i] + h_try * a21 * k1[i];
        k2 = rhs(t + c2 * h_try, yt);
        for (std::size_t i = 0; i < N; ++i) yt[i] = y[i] + h_try * (a31 * k1[i] + a32 * k2[i]);
        k3 = rhs(t + c3 * h_try, yt);
        for (std::size_t i = 0; i < N; ++i) yt[i] = y[i] + h_try * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        k4 = rhs(t + c4 * h_try, yt);
        for (std::size_t i = 0; i < N; ++i)
            yt[i] = y[i] + h_try * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        k5 = rhs(t + c5 * h_try, yt);
        for (std::size_t i = 0; i < N; ++i)
            yt[i] = y[i] + h_try * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        k6 = rhs(t + h_try, yt);
        for (std::size_t i = 0; i < N; ++i)
            y5[i] = y[i] + h_try * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        k7 = rhs(t + h_try, y5);

        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double ei =
                h_try * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double scale = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
            err = std::max(err, std::abs(ei) / scale);
        }

        if (err <= 1.0 && finite(y5)) {
            t += h_try;
            y = y5;
            k1 = k7; // FSAL
            k1_fresh = true;
            if (clipped) {
                t = target; // avoid a 1-ulp short landing
                sink(next, y);
                ++next;
            }
            const double grow = (err == 0.0) ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
            if (!clipped) h = h_try * grow;
            else h = std::max(h, h_try * grow);
        } else {
            if (!finite(y5)) {
                h = 0.1 * h_try;
            } else {
                h = h_try * std::min(1.0, std::max(0.1, 0.9 * std::pow(err, -0.2)));
            }
            k1_fresh = true; // k1 still valid at (t, y)
            if (!(h > std::abs(t) * 1e-15 + 1e-300))
                throw IntegrationError("integrate_grid: step size underflow", t);
        }
        if (++steps > opt.max_steps) throw IntegrationError("integrate_grid: step budget exhausted", t);
    }
}

// Convenience: collect the state at every grid time.
template <std::size_t N, typename RHS>
std::vector<std::array<double, N>> solve_on_grid(RHS&& rhs, const std::array<double, N>& y0,
                                                 std::span<const double> grid,
                                                 const IntegratorOptions& opt = {}) {
    std::vector<std::array<double, N>> out(grid.size());
    integrate_grid<N>(rhs, y0, grid, opt, [&](std::size_t i, const std::array<double, N>& y) { out[i] = y; });
    return out;
}

} // namespace cpm
