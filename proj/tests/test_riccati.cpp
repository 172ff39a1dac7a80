#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cpm/riccati.hpp"

using namespace cpm;
using Catch::Approx;

namespace {
constexpr double kPi = 3.141592653589793238463;

ModelParams params(double r, double phi = 0.0, double q = 1.0, Mode mode = Mode::Homodyne) {
    ModelParams p;
    p.r = r;
    p.phi = phi;
    p.q = q;
    p.mode = mode;
    return p;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

double max_abs_residual(const RiccatiCoeffs& k, const Covariance& v) {
    const auto r = riccati_rhs(k, {v.xx, v.pp, v.xp});
    return std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])});
}
} // namespace

TEST_CASE("coefficient matrices reproduce the scalar moment flow", "[riccati]") {
    const auto k = RiccatiCoeffs::from_params(params(20.0));
    CHECK(k.A.m01 == 1.0);
    CHECK(k.A.m10 == -1.0);
    CHECK(k.B.m00 == Approx(0.1));
    CHECK(k.B.m11 == 0.0);
    CHECK(k.C.m11 == Approx(0.1));
    CHECK(k.D.m01 == k.A.m10);
    CHECK(k.D.m10 == k.A.m01);

    // general phi/q against the handwritten equations
    const double r = 3.0, phi = 0.7, q = 2.0;
    const auto kg = RiccatiCoeffs::from_params(params(r, phi, q));
    const double c2 = std::cos(phi) * std::cos(phi);
    const Covariance v{1.4, 2.2, -0.3};
    const auto rhs = riccati_rhs(kg, {v.xx, v.pp, v.xp});
    CHECK(rhs[0] == Approx(2 * v.xp - (2 / r) * c2 * v.xx * v.xx).margin(1e-14));
    CHECK(rhs[1] == Approx(-2 * (1 - std::sin(2 * phi) / r) * v.xp + (2 / r) * (c2 + q * q - 1) -
                           (2 / r) * c2 * v.xp * v.xp)
                        .margin(1e-14));
    CHECK(rhs[2] ==
          Approx(v.pp - (1 - std::sin(2 * phi) / r) * v.xx - (2 / r) * c2 * v.xx * v.xp).margin(1e-14));
}

TEST_CASE("quantum eraser: B and C vanish at phi = pi/2", "[riccati]") {
    const auto k = RiccatiCoeffs::from_params(params(5.0, kPi / 2));
    CHECK(std::abs(k.B.m00) < 1e-30);
    CHECK(std::abs(k.C.m11) < 1e-30);
    // and the flow keeps the area constant from any start
    const Covariance v{3.0, 1.5, 0.4};
    const auto rhs = riccati_rhs(k, {v.xx, v.pp, v.xp});
    const double darea2 = rhs[0] * v.pp + v.xx * rhs[1] - 2.0 * v.xp * rhs[2];
    CHECK(std::abs(darea2) < 1e-14);
}

TEST_CASE("heterodyne coefficients equal homodyne at doubled r", "[riccati]") {
    for (double q : {1.0, 3.0}) {
        const auto het = RiccatiCoeffs::from_params(params(7.0, 1.1, q, Mode::Heterodyne));
        const auto hom = RiccatiCoeffs::from_params(params(14.0, 0.0, q));
        CHECK(het.A.m01 == hom.A.m01);
        CHECK(het.B.m00 == hom.B.m00);
        CHECK(het.C.m11 == hom.C.m11);
    }
}

TEST_CASE("area flow identity d(A^2)/dt = (2/r) V_xx (cos^2 phi (1 - A^2) + q^2 - 1)", "[riccati]") {
    for (double phi : {0.0, 0.4, 1.2}) {
        for (double q : {1.0, 2.5}) {
            const double r = 6.0;
            const auto k = RiccatiCoeffs::from_params(params(r, phi, q));
            const Covariance v{2.7, 4.1, 0.8};
            const auto rhs = riccati_rhs(k, {v.xx, v.pp, v.xp});
            const double lhs = rhs[0] * v.pp + v.xx * rhs[1] - 2.0 * v.xp * rhs[2];
            const double c2 = std::cos(phi) * std::cos(phi);
            const double expect = (2.0 / r) * v.xx * (c2 * (1.0 - v.det()) + q * q - 1.0);
            CHECK(lhs == Approx(expect).margin(1e-12));
        }
    }
}

TEST_CASE("phi = 0 steady state: purity and regime limits", "[riccati]") {
    // exact purity across six orders of magnitude in r
    for (double r : {0.01, 0.63, 1.0, 5.6, 20.0, 1000.0}) {
        const auto ss = steady_state(params(r));
        CHECK(std::abs(phase_space_area(ss) - 1.0) < 1e-9);
        CHECK(max_abs_residual(RiccatiCoeffs::from_params(params(r)), ss) < 1e-10);
    }
    // strong measurement: squeezed in position
    {
        const double r = 1e-4;
        const auto ss = steady_state(params(r));
        CHECK(ss.xx == Approx(std::sqrt(r)).epsilon(0.02));
        CHECK(ss.pp == Approx(2.0 / std::sqrt(r)).epsilon(0.02));
        CHECK(ss.xp == Approx(1.0).epsilon(0.02));
    }
    // weak measurement: approximately coherent
    {
        const double r = 1e4;
        const auto ss = steady_state(params(r));
        CHECK(ss.xx == Approx(1.0).epsilon(1e-3));
        CHECK(ss.pp == Approx(1.0).epsilon(1e-3));
        CHECK(ss.xp == Approx(1.0 / r).epsilon(1e-3));
    }
    // imperfect detection: area = q
    CHECK(phase_space_area(steady_state(params(20.0, 0.0, 5.0))) == Approx(5.0).margin(1e-9));
}

TEST_CASE("steady state is a Riccati fixed point across (r, phi, q)", "[riccati]") {
    for (double r : {0.01, 0.63, 1.0, 5.6, 20.0, 1000.0}) {
        for (double phi : {0.0, kPi / 8, kPi / 4, 3 * kPi / 8}) {
            for (double q : {1.0, 2.0, 5.0}) {
                const auto p = params(r, phi, q);
                const auto ss = steady_state(p);
                CAPTURE(r, phi, q);
                CHECK(ss.positive_definite());
                CHECK(max_abs_residual(RiccatiCoeffs::from_params(p), ss) < 1e-10);
                if (q == 1.0) CHECK(std::abs(phase_space_area(ss) - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("steady state: strong-measurement limits for general phi", "[riccati]") {
    const double r = 1e-4;
    for (double phi : {kPi / 8, kPi / 4, 3 * kPi / 8}) {
        const auto ss = steady_state(params(r, phi));
        const double k = 1.0 / std::abs(std::cos(phi)) + std::tan(phi);
        CHECK(ss.xx == Approx(std::sqrt(r) / std::abs(std::cos(phi)) * std::sqrt(k)).epsilon(0.05));
        CHECK(ss.pp == Approx(2.0 / std::sqrt(r) * std::sqrt(k)).epsilon(0.05));
        CHECK(ss.xp == Approx(k).epsilon(0.05));
    }
}

TEST_CASE("steady state: weak-measurement limit for general phi", "[riccati]") {
    const double r = 1e4, phi = kPi / 4;
    const auto ss = steady_state(params(r, phi));
    CHECK(ss.xx == Approx(1.0 + std::sin(2 * phi) / (2 * r)).epsilon(1e-6));
    CHECK(ss.pp == Approx(1.0 - std::sin(2 * phi) / (2 * r)).epsilon(1e-6));
    CHECK(ss.xp == Approx(std::cos(phi) * std::cos(phi) / r).epsilon(1e-3));
}

TEST_CASE("momentum can be squeezed below position at steady state", "[riccati]") {
    // From the fixed-point algebra, V_pp < V_xx iff tan(phi) > V_xp^ss, which
    // happens once the oscillator dynamics dominate (r >~ 1, 0 < phi < pi/2).
    for (auto [r, phi] : {std::pair{20.0, kPi / 4}, std::pair{2.0, kPi / 3}, std::pair{20.0, kPi / 8}}) {
        const auto ss = steady_state(params(r, phi));
        CAPTURE(r, phi);
        CHECK(ss.pp < ss.xx);
        CHECK(std::tan(phi) > ss.xp);
        CHECK(std::abs(phase_space_area(ss) - 1.0) < 1e-9);
    }
    // and in the measurement-dominated regime it is the position that is squeezed
    const auto strong = steady_state(params(1e-3, kPi / 8));
    CHECK(strong.xx < strong.pp);
}

TEST_CASE("no steady state at the eraser phases", "[riccati]") {
    CHECK_THROWS_AS(steady_state(params(5.0, kPi / 2)), NoSteadyStateError);
    CHECK_THROWS_AS(steady_state(params(5.0, 3 * kPi / 2)), NoSteadyStateError);
}

TEST_CASE("V_xx^ss grows with q; area equals q", "[riccati]") {
    double prev = 0.0;
    for (double q : {1.0, 2.0, 3.0, 5.0}) {
        const auto ss = steady_state(params(20.0, 0.0, q));
        CHECK(phase_space_area(ss) == Approx(q).margin(1e-9));
        CHECK(ss.xx > prev);
        prev = ss.xx;
    }
}

TEST_CASE("b, c satisfy their algebraic identities", "[riccati]") {
    for (double r : {0.05, 1.0, 20.0, 500.0}) {
        for (double q : {1.0, 5.0}) {
            const auto s = RiccatiSolution::from_params(r, q);
            CHECK(s.c * s.c - s.b * s.b == Approx(1.0).margin(1e-12));
            CHECK(s.b * s.c == Approx(q / r).epsilon(1e-12));
            CHECK(s.c == Approx(q / steady_state_phi0(r, q).xx).epsilon(1e-12));
        }
    }
}

TEST_CASE("closed-form V_xx: endpoints and steady limit", "[riccati]") {
    CHECK(closed_form_vxx(20.0, 1.0, 20.0, 0.0) == 20.0);
    CHECK(closed_form_vxx(20.0, 5.0, 7.0, 0.0) == Approx(7.0).epsilon(1e-14));
    const auto sol = RiccatiSolution::from_params(20.0, 1.0);
    CHECK(closed_form_vxx(20.0, 1.0, 20.0, 1e4) == Approx(1.0 / sol.c).epsilon(1e-12));
    CHECK(closed_form_vxx(20.0, 5.0, 20.0, 1e9) ==
          Approx(steady_state_phi0(20.0, 5.0).xx).epsilon(1e-12));
    CHECK_THROWS_AS(closed_form_vxx(20.0, 1.0, 20.0, -1.0), std::invalid_argument);
    // fast initial drop, then a staircase relaxation: near-flat plateaus where
    // V_xp crosses zero alternate with steep decays
    CHECK(closed_form_vxx(20.0, 1.0, 20.0, 0.5) < 11.0);
    auto slope = [](double t) {
        return (closed_form_vxx(20.0, 1.0, 20.0, t + 5e-3) - closed_form_vxx(20.0, 1.0, 20.0, t - 5e-3)) / 1e-2;
    };
    CHECK(std::abs(slope(1.25)) < 0.5); // plateau
    CHECK(std::abs(slope(2.75)) > 1.5); // steep segment
    CHECK(closed_form_vxx(20.0, 1.0, 20.0, 8.0) < closed_form_vxx(20.0, 1.0, 20.0, 3.0));
    CHECK(closed_form_vxx(20.0, 1.0, 20.0, 20.0) < closed_form_vxx(20.0, 1.0, 20.0, 8.0));
}

TEST_CASE("numeric integration matches the closed form", "[riccati]") {
    for (double q : {1.0, 5.0}) {
        const auto p = params(20.0, 0.0, q);
        const auto grid = linspace(0.0, 120.0, 241);
        const auto path = integrate_covariance(RiccatiCoeffs::from_params(p), isotropic(20.0), grid);
        double worst = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            worst = std::max(worst, std::abs(path[i].xx - closed_form_vxx(20.0, q, 20.0, grid[i])));
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("fixed point stays fixed under integration", "[riccati]") {
    const auto p = params(20.0);
    const auto ss = steady_state(p);
    const auto grid = linspace(0.0, 50.0, 101);
    const auto path = integrate_covariance(RiccatiCoeffs::from_params(p), ss, grid);
    for (const auto& v : path) {
        CHECK(std::abs(v.xx - ss.xx) < 1e-9);
        CHECK(std::abs(v.pp - ss.pp) < 1e-9);
        CHECK(std::abs(v.xp - ss.xp) < 1e-9);
    }
}

TEST_CASE("phi = pi/2 flow is the unitary rotation of the covariance", "[riccati]") {
    const auto p = params(20.0, kPi / 2);
    const auto grid = linspace(0.0, 12.0, 97);
    const Covariance v0{20.0, 5.0, 0.0};
    const auto path = integrate_covariance(RiccatiCoeffs::from_params(p), v0, grid);
    const double a0 = phase_space_area(v0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        // trace preserved, traceless part rotating at 2 omega, area constant
        const double t = grid[i];
        const double u = (v0.xx - v0.pp) * std::cos(2 * t) + 2 * v0.xp * std::sin(2 * t);
        const double vv = v0.xp * std::cos(2 * t) - 0.5 * (v0.xx - v0.pp) * std::sin(2 * t);
        CHECK(path[i].xx + path[i].pp == Approx(v0.xx + v0.pp).epsilon(1e-9));
        CHECK(path[i].xx - path[i].pp == Approx(u).margin(1e-7));
        CHECK(path[i].xp == Approx(vv).margin(1e-7));
        CHECK(phase_space_area(path[i]) == Approx(a0).epsilon(1e-9));
    }
}

TEST_CASE("convergence-time law: relaxation takes ~ tau_col regardless of V0", "[riccati]") {
    // Time of the last excursion of |V_xx - V_xx^ss| above 1% of the steady
    // value stays within a factor 1.5 of the collapse time and is insensitive
    // to the initial temperature across ten orders of magnitude.
    const auto p = params(20.0);
    const double tau = collapse_time(p);
    const auto ss = steady_state(p);
    const auto grid = linspace(0.0, 3.0 * tau, 2401);
    std::vector<double> tconv;
    for (double v0 : {20.0, 1e3, 1e10}) {
        const auto path = integrate_covariance(RiccatiCoeffs::from_params(p), isotropic(v0), grid);
        double tc = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(path[i].xx - ss.xx) >= 0.01 * ss.xx) tc = grid[i];
        tconv.push_back(tc);
    }
    for (double tc : tconv) {
        CHECK(tc > tau / 1.5);
        CHECK(tc < tau * 1.5);
    }
    const double ratio = *std::max_element(tconv.begin(), tconv.end()) /
                         *std::min_element(tconv.begin(), tconv.end());
    CHECK(ratio < 1.2);
}

TEST_CASE("integration input validation", "[riccati]") {
    const auto k = RiccatiCoeffs::from_params(params(20.0));
    const std::vector<double> bad{0.0, 1.0, 0.5};
    CHECK_THROWS_AS(integrate_covariance(k, isotropic(1.0), bad), std::invalid_argument);
    const std::vector<double> ok{0.0, 1.0};
    CHECK_THROWS_AS(integrate_covariance(k, Covariance{1.0, 1.0, 2.0}, ok), InvalidStateError);
}

TEST_CASE("Reid solution agrees with direct integration", "[riccati]") {
    const auto grid = linspace(0.0, 20.0, 81);
    for (double phi : {0.0, kPi / 4}) {
        const auto p = params(20.0, phi);
        const auto k = RiccatiCoeffs::from_params(p);
        const auto direct = integrate_covariance(k, isotropic(20.0), grid);
        const auto reid = reid_path(k, isotropic(20.0), grid);
        double worst = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            worst = std::max({worst, std::abs(direct[i].xx - reid[i].xx), std::abs(direct[i].pp - reid[i].pp),
                              std::abs(direct[i].xp - reid[i].xp)});
        CAPTURE(phi);
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("Reid solution agrees with the closed form and fixed point", "[riccati]") {
    const auto p = params(20.0);
    const auto k = RiccatiCoeffs::from_params(p);
    for (double t : {0.0, 0.3, 2.0, 11.0}) {
        CHECK(reid_solution(k, isotropic(20.0), t).xx == Approx(closed_form_vxx(20.0, 1.0, 20.0, t)).margin(1e-9));
    }
    const auto ss = steady_state(p);
    const auto v = reid_solution(k, ss, 7.0);
    CHECK(v.xx == Approx(ss.xx).margin(1e-9));
    CHECK(v.pp == Approx(ss.pp).margin(1e-9));
}

TEST_CASE("Reid path reports a singular U", "[riccati]") {
    // Crafted coefficients: A = C = 0, B = diag(-1, 0) give U = I + t B V0,
    // singular at t = 1/V0_xx.
    RiccatiCoeffs k;
    k.B = Mat2{-1.0, 0.0, 0.0, 0.0};
    const std::vector<double> grid{0.0, 1.0};
    CHECK_THROWS_AS(reid_path(k, isotropic(1.0), grid), NearSingularError);
}

TEST_CASE("collapse time scales and modes", "[riccati]") {
    CHECK(collapse_time(20.0, 1.0) == Approx(40.0).epsilon(0.05));      // ~ 2r/omega for r >> 1
    CHECK(collapse_time(20.0, 1.0, 5.0) == Approx(8.0).epsilon(0.05));  // ~ tau_col / q
    CHECK(collapse_time(1e-4, 1.0) == Approx(2.0 * std::sqrt(1e-4)).epsilon(0.01)); // b ~ 1/sqrt(r)
    CHECK(collapse_time(7.0, 1.0, 1.0, Mode::Heterodyne) == collapse_time(14.0, 1.0));
    CHECK(collapse_time(20.0, 2.0) == Approx(collapse_time(20.0, 1.0) / 2.0).epsilon(1e-12));
}
