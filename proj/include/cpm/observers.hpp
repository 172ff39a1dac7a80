#pragma once

// Two observers, Alice and Bob, condition on the same phi = 0 record from
// different priors. Alice is the preferred observer and holds the steady
// covariance throughout; Bob's covariance follows the Riccati flow. The mean
// differences e_x = x^B - x^A, e_p = p^B - p^A obey
//
//   de_x = omega e_p dt - (2 omega / r) Vxx^B e_x dt
//          + sqrt(2 omega / r) (Vxx^B - Vxx^A) dW
//   de_p = -omega (1 + (2/r) Vxp^B) e_x dt
//          + sqrt(2 omega / r) (Vxp^B - Vxp^A) dW
//
// i.e. a damped oscillation whose noise is weighted by the covariance gap;
// once Bob's covariance reaches Alice's the noise shuts off exactly and the
// differences damp deterministically to zero. Second moments of e evolve as
//
//   d E[ex^2]  = 2 E[ex ep] - (4/r) Vxx^B E[ex^2] + (2/r)(dVxx)^2
//   d E[ep^2]  = -2 E[ex ep] - (4/r) Vxp^B E[ex ep] + (2/r)(dVxp)^2
//   d E[ex ep] = E[ep^2] - E[ex^2] - (2/r) Vxp^B E[ex^2]
//                - (2/r) Vxx^B E[ex ep] + (2/r) dVxx dVxp
//
// (rates per unit omega; dV = V^B - V^A).

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"
#include "cpm/riccati.hpp"
#include "cpm/rk45.hpp"

namespace cpm {

struct ObserverErrorState {
    double e_x = 0.0;
    double e_p = 0.0;
    double e_xx = 0.0; // E[e_x^2]
    double e_pp = 0.0; // E[e_p^2]
    double e_xp = 0.0; // E[e_x e_p]
    Covariance v_a;    // Alice (steady)
    Covariance v_b;    // Bob

    double error_det() const { return e_xx * e_pp - e_xp * e_xp; }
};

// Advance (e_x, e_p) by one step under the shared-record SDE, with the same
// semi-implicit treatment of the stiff e_x gain as the mean filters use.
inline ObserverErrorState error_sde_step(const ObserverErrorState& st, const ModelParams& params, double dw,
                                         double dt) {
    const double w = params.omega, r = params.r;
    const double noise = std::sqrt(2.0 * w / r);
    ObserverErrorState out = st;
    const double ex_new = (st.e_x + w * st.e_p * dt + noise * (st.v_b.xx - st.v_a.xx) * dw) /
                          (1.0 + (2.0 * w / r) * st.v_b.xx * dt);
    out.e_p = st.e_p - w * (1.0 + (2.0 / r) * st.v_b.xp) * ex_new * dt + noise * (st.v_b.xp - st.v_a.xp) * dw;
    out.e_x = ex_new;
    return out;
}

// Expected error second moments on a grid: the three error-covariance ODEs
// integrated jointly with Bob's Riccati flow (6 coupled components), Alice
// pinned to the steady state.
inline std::vector<ObserverErrorState> error_covariance_flow(const ObserverErrorState& initial,
                                                             const ModelParams& params,
                                                             std::span<const double> t_grid,
                                                             const IntegratorOptions& opt = {}) {
    params.validate();
    const double mdet = initial.e_xx * initial.e_pp - initial.e_xp * initial.e_xp;
    if (initial.e_xx < 0.0 || initial.e_pp < 0.0 || mdet < -1e-12 * std::max(1.0, initial.e_xx * initial.e_pp))
        throw InvalidStateError("error_covariance_flow: initial error moments must be PSD");

    const Covariance va = steady_state(params);
    const auto coeffs = RiccatiCoeffs::from_params(params);
    const double w = params.omega, r = params.r;

    auto rhs = [&](double, const std::array<double, 6>& y) {
        const auto dv = riccati_rhs(coeffs, {y[0], y[1], y[2]});
        const double vbxx = y[0], vbxp = y[2];
        const double gxx = vbxx - va.xx, gxp = vbxp - va.xp;
        const double exx = y[3], epp = y[4], exp_ = y[5];
        return std::array<double, 6>{
            dv[0], dv[1], dv[2],
            w * (2.0 * exp_ - (4.0 / r) * vbxx * exx + (2.0 / r) * gxx * gxx),
            w * (-2.0 * exp_ - (4.0 / r) * vbxp * exp_ + (2.0 / r) * gxp * gxp),
            w * (epp - exx - (2.0 / r) * vbxp * exx - (2.0 / r) * vbxx * exp_ + (2.0 / r) * gxx * gxp)};
    };

    std::vector<ObserverErrorState> out(t_grid.size());
    integrate_grid<6>(rhs,
                      std::array<double, 6>{initial.v_b.xx, initial.v_b.pp, initial.v_b.xp, initial.e_xx,
                                            initial.e_pp, initial.e_xp},
                      t_grid, opt, [&](std::size_t i, const std::array<double, 6>& y) {
                          ObserverErrorState s = initial;
                          s.v_a = va;
                          s.v_b = Covariance{y[0], y[1], y[2]};
                          s.e_xx = y[3];
                          s.e_pp = y[4];
                          s.e_xp = y[5];
                          out[i] = s;
                      });
    return out;
}

enum class AgreementReference {
    InitialDet, // threshold relative to det E(0); collapses for huge priors
    SteadyDet   // threshold relative to det V^ss = q^2 (absolute-scale criterion)
};

// First grid time at which det E <= threshold * reference. nullopt marks a
// horizon that was never reached.
inline std::optional<double> agreement_time(std::span<const double> times,
                                            std::span<const ObserverErrorState> path, double threshold,
                                            AgreementReference ref = AgreementReference::InitialDet,
                                            double steady_det = 1.0) {
    if (times.size() != path.size() || times.empty())
        throw std::invalid_argument("agreement_time: times/path size mismatch");
    const double base = (ref == AgreementReference::InitialDet) ? path.front().error_det() : steady_det;
    const double cut = threshold * base;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (path[i].error_det() <= cut) return times[i];
    return std::nullopt;
}

} // namespace cpm
