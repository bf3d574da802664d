#pragma once

// Scattering transformation, lossy wave transmission and the coordination law.
//
// Port conventions (diagonal gains, element-wise):
//   master: F_md = K_m (r_m - r_md),  u_m = (F_md + b r_md)/sqrt(2b),  v_m = (F_md - b r_md)/sqrt(2b)
//   slave:  F_sd = K_s (r_sd - r_s),  u_s = (F_sd + b r_sd)/sqrt(2b),  v_s = (F_sd - b r_sd)/sqrt(2b)
// The link delivers u_s = L_f u_m and v_m = L_b v_s.

#include <cmath>
#include <stdexcept>
#include <utility>

#include "telesim/dynamics.hpp"
#include "telesim/loss.hpp"

namespace telesim {

template <int N>
struct MasterPort {
    Vec<N> r_md = Vec<N>::Zero();
    Vec<N> F_md = Vec<N>::Zero();
    Vec<N> u_m = Vec<N>::Zero();
};

template <int N>
struct SlavePort {
    Vec<N> r_sd = Vec<N>::Zero();
    Vec<N> F_sd = Vec<N>::Zero();
    Vec<N> v_s = Vec<N>::Zero();
};

template <int N>
struct WaveSample {
    Vec<N> u_m = Vec<N>::Zero();
    Vec<N> v_m = Vec<N>::Zero();
    Vec<N> u_s = Vec<N>::Zero();
    Vec<N> v_s = Vec<N>::Zero();
    Vec<N> u_m_star = Vec<N>::Zero();  // equals u_s
    Vec<N> v_s_star = Vec<N>::Zero();  // equals v_m
};

template <int N>
struct CoordinationState {
    Vec<N> r_m = Vec<N>::Zero();
    Vec<N> r_s = Vec<N>::Zero();
    Vec<N> r_md = Vec<N>::Zero();
    Vec<N> r_sd = Vec<N>::Zero();
    Vec<N> F_md = Vec<N>::Zero();
    Vec<N> F_sd = Vec<N>::Zero();
    // What the far side effectively sees: the sender's quantities scaled by the loss
    // factor that scaled its wave. With matched gains r_m_star = 2 r_sd - r_s.
    Vec<N> r_m_star = Vec<N>::Zero();
    Vec<N> r_md_star = Vec<N>::Zero();
    Vec<N> r_s_star = Vec<N>::Zero();
    Vec<N> r_sd_star = Vec<N>::Zero();
    WaveSample<N> waves;
    double L_forward = 1.0;
    double L_backward = 1.0;
};

struct LossFactors {
    double forward = 1.0;
    double backward = 1.0;
};

template <int N>
Vec<N> sqrt_2b(const Gains<N>& g) {
    return (2.0 * g.b).cwiseSqrt();
}

/// Master port: given the received wave v_m and r_m, returns r_md, F_md and the outgoing u_m.
template <int N>
MasterPort<N> master_side(const Vec<N>& v_m, const Vec<N>& r_m, const Gains<N>& g) {
    const Vec<N> s = sqrt_2b(g);
    MasterPort<N> out;
    out.r_md = (g.K_m.cwiseProduct(r_m) - s.cwiseProduct(v_m)).cwiseQuotient(g.K_m + g.b);
    out.F_md = g.K_m.cwiseProduct(r_m - out.r_md);
    out.u_m = (out.F_md + g.b.cwiseProduct(out.r_md)).cwiseQuotient(s);
    return out;
}

/// Slave port: given the received wave u_s and r_s, returns r_sd, F_sd and the outgoing v_s.
template <int N>
SlavePort<N> slave_side(const Vec<N>& u_s, const Vec<N>& r_s, const Gains<N>& g) {
    const Vec<N> s = sqrt_2b(g);
    SlavePort<N> out;
    out.r_sd = (s.cwiseProduct(u_s) + g.K_s.cwiseProduct(r_s)).cwiseQuotient(g.b + g.K_s);
    out.F_sd = g.K_s.cwiseProduct(out.r_sd - r_s);
    out.v_s = (out.F_sd - g.b.cwiseProduct(out.r_sd)).cwiseQuotient(s);
    return out;
}

inline double transmit(double wave, double loss_factor) { return wave * loss_factor; }

template <int N>
Vec<N> transmit(const Vec<N>& wave, double loss_factor) {
    return wave * loss_factor;
}

template <int N>
Vec<N> transmit(const Vec<N>& wave, double t, const LossSignal& loss) {
    return wave * loss(t);
}

inline double transmit(double wave, double t, const LossProfile& profile) { return wave * LossSignal(profile)(t); }

/// Same-instant wave exchange. With unmatched gains the two ports reflect into each
/// other, so u_m is found from the closed loop
///   u_m = a_m r_m - rho_m v_m,  v_s = -rho_s u_s - a_s r_s,  u_s = L_f u_m,  v_m = L_b v_s.
template <int N>
CoordinationState<N> exchange(const Vec<N>& r_m, const Vec<N>& r_s, const Gains<N>& g, LossFactors loss) {
    const Vec<N> s = sqrt_2b(g);
    const Vec<N> rho_m = (g.b - g.K_m).cwiseQuotient(g.b + g.K_m);
    const Vec<N> rho_s = (g.b - g.K_s).cwiseQuotient(g.b + g.K_s);
    const Vec<N> a_m = s.cwiseProduct(g.K_m).cwiseQuotient(g.b + g.K_m);
    const Vec<N> a_s = s.cwiseProduct(g.K_s).cwiseQuotient(g.b + g.K_s);
    const Vec<N> denom = (Vec<N>::Ones() - (loss.forward * loss.backward) * rho_m.cwiseProduct(rho_s));
    if ((denom.array() <= 1e-12).any()) {
        throw std::runtime_error("wave exchange is singular: reflection loop gain reached 1");
    }

    CoordinationState<N> c;
    c.L_forward = loss.forward;
    c.L_backward = loss.backward;
    c.r_m = r_m;
    c.r_s = r_s;

    const Vec<N> u_m = (a_m.cwiseProduct(r_m) + loss.backward * rho_m.cwiseProduct(a_s).cwiseProduct(r_s))
                           .cwiseQuotient(denom);
    const Vec<N> u_s = transmit<N>(u_m, loss.forward);
    const SlavePort<N> slave = slave_side<N>(u_s, r_s, g);
    const Vec<N> v_m = transmit<N>(slave.v_s, loss.backward);
    const MasterPort<N> master = master_side<N>(v_m, r_m, g);

    c.r_md = master.r_md;
    c.F_md = master.F_md;
    c.r_sd = slave.r_sd;
    c.F_sd = slave.F_sd;
    c.waves = {u_m, v_m, u_s, slave.v_s, u_s, v_m};
    c.r_m_star = loss.forward * r_m;
    c.r_md_star = loss.forward * c.r_md;
    c.r_s_star = loss.backward * r_s;
    c.r_sd_star = loss.backward * c.r_sd;
    return c;
}

/// One-step transport delay: each port receives what the other sent at the previous sample.
template <int N>
CoordinationState<N> exchange_delayed(const Vec<N>& r_m, const Vec<N>& r_s, const Gains<N>& g, LossFactors loss,
                                      const CoordinationState<N>& previous) {
    CoordinationState<N> c;
    c.L_forward = loss.forward;
    c.L_backward = loss.backward;
    c.r_m = r_m;
    c.r_s = r_s;
    const Vec<N> u_s = transmit<N>(previous.waves.u_m, loss.forward);
    const Vec<N> v_m = transmit<N>(previous.waves.v_s, loss.backward);
    const MasterPort<N> master = master_side<N>(v_m, r_m, g);
    const SlavePort<N> slave = slave_side<N>(u_s, r_s, g);
    c.r_md = master.r_md;
    c.F_md = master.F_md;
    c.r_sd = slave.r_sd;
    c.F_sd = slave.F_sd;
    c.waves = {master.u_m, v_m, u_s, slave.v_s, u_s, v_m};
    c.r_m_star = loss.forward * previous.r_m;
    c.r_md_star = loss.forward * previous.r_md;
    c.r_s_star = loss.backward * previous.r_s;
    c.r_sd_star = loss.backward * previous.r_sd;
    return c;
}

/// (b + K_s) r_sd - (b - K_m) r_md* - K_m r_m* - K_s r_s
template <int N>
Vec<N> slave_constraint_residual(const CoordinationState<N>& c, const Gains<N>& g) {
    return (g.b + g.K_s).cwiseProduct(c.r_sd) - (g.b - g.K_m).cwiseProduct(c.r_md_star) -
           g.K_m.cwiseProduct(c.r_m_star) - g.K_s.cwiseProduct(c.r_s);
}

/// (b + K_m) r_md - (b - K_s) r_sd* - K_s r_s* - K_m r_m
template <int N>
Vec<N> master_constraint_residual(const CoordinationState<N>& c, const Gains<N>& g) {
    return (g.b + g.K_m).cwiseProduct(c.r_md) - (g.b - g.K_s).cwiseProduct(c.r_sd_star) -
           g.K_s.cwiseProduct(c.r_s_star) - g.K_m.cwiseProduct(c.r_m);
}

/// Matched-gain reduction: (2 r_sd - r_m* - r_s, 2 r_md - r_s* - r_m).
template <int N>
std::pair<Vec<N>, Vec<N>> matched_reduction_residual(const CoordinationState<N>& c) {
    return {2.0 * c.r_sd - c.r_m_star - c.r_s, 2.0 * c.r_md - c.r_s_star - c.r_m};
}

}  // namespace telesim
