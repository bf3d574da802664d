#pragma once

// Tracking errors, the Lyapunov candidate and the channel energy bookkeeping.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "telesim/channel.hpp"
#include "telesim/dynamics.hpp"

namespace telesim {

/// How the starred (post-loss) positions in the tracking errors are formed.
///   Analysis:   q* = L(t) q, the literal definition used in the stability argument.
///   Simulation: q* integrates q*' = r* - lambda q*, i.e. the position whose passive
///               output is the r* the far side actually receives.
enum class ErrorMode { Analysis, Simulation };

/// Whether the operator supply integral is subtracted from V.
///   Omit:     V = stored + environment supply + V1. Nonnegative for a passive environment,
///             non-increasing whenever F_h = 0.
///   Subtract: the candidate exactly as written, with -int F_h^T r_m. Its derivative is the
///             closed-form dissipation for any F_h, so from V(0) = 0 it never becomes positive.
enum class OperatorTerm { Omit, Subtract };

template <int N>
struct TrackingError {
    Vec<N> e_m = Vec<N>::Zero();
    Vec<N> e_s = Vec<N>::Zero();
    Vec<N> ed_m = Vec<N>::Zero();
    Vec<N> ed_s = Vec<N>::Zero();
};

template <int N>
struct StarredPositions {
    Vec<N> q_m = Vec<N>::Zero();
    Vec<N> q_s = Vec<N>::Zero();
    Vec<N> qd_m = Vec<N>::Zero();
    Vec<N> qd_s = Vec<N>::Zero();
};

/// e_m = q_m* - q_s, e_s = q_s* - q_m (positions only).
template <int N>
TrackingError<N> tracking_errors(const Vec<N>& q_m_star, const Vec<N>& q_s, const Vec<N>& q_s_star,
                                 const Vec<N>& q_m) {
    TrackingError<N> e;
    e.e_m = q_m_star - q_s;
    e.e_s = q_s_star - q_m;
    return e;
}

template <int N>
TrackingError<N> tracking_errors(const StarredPositions<N>& star, const JointState<N>& master,
                                 const JointState<N>& slave) {
    TrackingError<N> e = tracking_errors<N>(star.q_m, slave.q, star.q_s, master.q);
    e.ed_m = star.qd_m - slave.qd;
    e.ed_s = star.qd_s - master.qd;
    return e;
}

/// q* = L q and q*' = L' q + L q'.
template <int N>
StarredPositions<N> analysis_starred(double L_forward, double Ld_forward, double L_backward, double Ld_backward,
                                     const JointState<N>& master, const JointState<N>& slave) {
    StarredPositions<N> s;
    s.q_m = L_forward * master.q;
    s.qd_m = Ld_forward * master.q + L_forward * master.qd;
    s.q_s = L_backward * slave.q;
    s.qd_s = Ld_backward * slave.q + L_backward * slave.qd;
    return s;
}

struct EnergyLedger {
    double supply_env = 0.0;     // int F_e^T r_s dt
    double supply_op = 0.0;      // int F_h^T r_m dt
    double diss_forward = 0.0;   // int (u_m^2 - u_s^2) dt
    double diss_backward = 0.0;  // int (v_s^2 - v_m^2) dt
    double V1_ports = 0.0;       // int 1/2 (u_m^2 - v_m^2) - 1/2 (u_s^2 - v_s^2) dt

    /// Wave energy from the loss form: half the two channel dissipation integrals.
    double V1() const { return 0.5 * (diss_forward + diss_backward); }
};

/// Power terms sampled at one instant, for trapezoidal accumulation.
struct PowerSample {
    double env = 0.0;
    double op = 0.0;
    double forward = 0.0;
    double backward = 0.0;
    double ports = 0.0;
};

template <int N>
PowerSample power_sample(const CoordinationState<N>& c, const Vec<N>& F_h, const Vec<N>& F_e) {
    const WaveSample<N>& w = c.waves;
    PowerSample p;
    p.env = F_e.dot(c.r_s);
    p.op = F_h.dot(c.r_m);
    p.forward = w.u_m.squaredNorm() - w.u_s.squaredNorm();
    p.backward = w.v_s.squaredNorm() - w.v_m.squaredNorm();
    p.ports = 0.5 * (w.u_m.squaredNorm() - w.v_m.squaredNorm()) - 0.5 * (w.u_s.squaredNorm() - w.v_s.squaredNorm());
    return p;
}

inline void accumulate(EnergyLedger& ledger, const PowerSample& begin, const PowerSample& end, double dt) {
    const double h = 0.5 * dt;
    ledger.supply_env += h * (begin.env + end.env);
    ledger.supply_op += h * (begin.op + end.op);
    ledger.diss_forward += h * (begin.forward + end.forward);
    ledger.diss_backward += h * (begin.backward + end.backward);
    ledger.V1_ports += h * (begin.ports + end.ports);
}

inline double wave_energy_v1(const EnergyLedger& ledger) { return ledger.V1(); }

template <int N>
struct LyapunovInputs {
    const RobotModel<N>* master = nullptr;
    const RobotModel<N>* slave = nullptr;
    JointState<N> master_state;
    JointState<N> slave_state;
    Vec<N> r_m = Vec<N>::Zero();
    Vec<N> r_s = Vec<N>::Zero();
};

template <int N>
double lyapunov_value(const LyapunovInputs<N>& in, const TrackingError<N>& e, const EnergyLedger& ledger,
                      const Gains<N>& g, OperatorTerm term = OperatorTerm::Omit) {
    double quad = 0.0;
    if (in.master != nullptr) {
        quad += in.r_m.dot(in.master->inertia(in.master_state.q) * in.r_m);
    }
    if (in.slave != nullptr) {
        quad += in.r_s.dot(in.slave->inertia(in.slave_state.q) * in.r_s);
    }
    quad += e.e_m.dot(g.K1.cwiseProduct(e.e_m)) + e.e_s.dot(g.K2.cwiseProduct(e.e_s));
    double v = 0.5 * quad + ledger.supply_env + ledger.V1();
    if (term == OperatorTerm::Subtract) {
        v -= ledger.supply_op;
    }
    return v;
}

/// -1/4 (ed_s^T b ed_s + e_s^T lambda b lambda e_s + ed_m^T b ed_m + e_m^T lambda b lambda e_m)
template <int N>
double vdot_closed_form(const TrackingError<N>& e, const Gains<N>& g) {
    if (!g.matched_mode()) {
        throw std::invalid_argument(
            "vdot_closed_form: requires matched gains (K_m = K_s = b, K1 = K2 = lambda b / 2)");
    }
    const Vec<N> lbl = g.lambda.cwiseProduct(g.b).cwiseProduct(g.lambda);
    return -0.25 * (e.ed_s.dot(g.b.cwiseProduct(e.ed_s)) + e.e_s.dot(lbl.cwiseProduct(e.e_s)) +
                    e.ed_m.dot(g.b.cwiseProduct(e.ed_m)) + e.e_m.dot(lbl.cwiseProduct(e.e_m)));
}

/// Residuals of r_s* - r_m = ed_s + lambda e_s and r_m* - r_s = ed_m + lambda e_m.
template <int N>
std::pair<Vec<N>, Vec<N>> error_r_identity_residual(const CoordinationState<N>& c, const TrackingError<N>& e,
                                                    const Vec<N>& lambda) {
    const Vec<N> res_s = (c.r_s_star - c.r_m) - (e.ed_s + lambda.cwiseProduct(e.e_s));
    const Vec<N> res_m = (c.r_m_star - c.r_s) - (e.ed_m + lambda.cwiseProduct(e.e_m));
    return {res_s, res_m};
}

struct BoundednessLimits {
    double bound = 1e6;
    double vdot_tail_threshold = 1e-6;
    double tail_fraction = 0.1;
};

struct BoundednessReport {
    double max_q = 0.0;
    double max_qd = 0.0;
    double max_qdd = 0.0;
    double max_r = 0.0;
    double max_e = 0.0;
    double max_ed = 0.0;
    double max_Vdd = 0.0;
    double tail_mean_abs_dV = 0.0;
    bool vdot_converged = true;
    std::vector<std::string> flags;

    bool bounded() const { return flags.empty(); }
};

/// Per-sample quantities the boundedness check needs.
struct BoundednessSample {
    double q = 0.0;
    double qd = 0.0;
    double qdd = 0.0;
    double r = 0.0;
    double e = 0.0;
    double ed = 0.0;
    double V = 0.0;
    double dV_fd = 0.0;
};

/// Streaming form of the boundedness check: maxima over time, the largest second
/// difference of V, and the mean |V'| over the final tail of the run.
class BoundednessMonitor {
public:
    BoundednessMonitor(double dt, std::size_t expected_samples, BoundednessLimits limits = {})
        : dt_(dt), limits_(limits) {
        tail_ = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(limits.tail_fraction * static_cast<double>(expected_samples))));
        tail_start_ = expected_samples > tail_ ? expected_samples - tail_ : 0;
    }

    void add(const BoundednessSample& s) {
        rep_.max_q = std::max(rep_.max_q, s.q);
        rep_.max_qd = std::max(rep_.max_qd, s.qd);
        rep_.max_qdd = std::max(rep_.max_qdd, s.qdd);
        rep_.max_r = std::max(rep_.max_r, s.r);
        rep_.max_e = std::max(rep_.max_e, s.e);
        rep_.max_ed = std::max(rep_.max_ed, s.ed);
        if (count_ >= 2) {
            const double vdd = (s.V - 2.0 * v_prev_ + v_prev2_) / (dt_ * dt_);
            rep_.max_Vdd = std::max(rep_.max_Vdd, std::abs(vdd));
        }
        if (count_ >= tail_start_) {
            tail_sum_ += std::abs(s.dV_fd);
            ++tail_count_;
        }
        v_prev2_ = v_prev_;
        v_prev_ = s.V;
        ++count_;
    }

    BoundednessReport finish() const {
        BoundednessReport rep = rep_;
        rep.tail_mean_abs_dV = tail_count_ > 0 ? tail_sum_ / static_cast<double>(tail_count_) : 0.0;
        rep.vdot_converged = rep.tail_mean_abs_dV < limits_.vdot_tail_threshold;
        const std::pair<const char*, double> checks[] = {
            {"q", rep.max_q}, {"qd", rep.max_qd}, {"qdd", rep.max_qdd}, {"r", rep.max_r},
            {"e", rep.max_e}, {"ed", rep.max_ed}, {"Vdd", rep.max_Vdd},
        };
        for (const auto& [name, value] : checks) {
            if (!std::isfinite(value) || value > limits_.bound) {
                rep.flags.emplace_back(name);
            }
        }
        return rep;
    }

private:
    double dt_;
    BoundednessLimits limits_;
    std::size_t tail_ = 1;
    std::size_t tail_start_ = 0;
    std::size_t count_ = 0;
    std::size_t tail_count_ = 0;
    double tail_sum_ = 0.0;
    double v_prev_ = 0.0;
    double v_prev2_ = 0.0;
    BoundednessReport rep_;
};

inline BoundednessReport boundedness_report(const std::vector<BoundednessSample>& samples, double dt,
                                            const BoundednessLimits& limits = {}) {
    BoundednessMonitor monitor(dt, samples.size(), limits);
    for (const BoundednessSample& s : samples) {
        monitor.add(s);
    }
    return monitor.finish();
}

}  // namespace telesim
