#pragma once

// Scenario definition: robots, gains, loss, operator/environment force models, run settings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "telesim/dynamics.hpp"
#include "telesim/energy.hpp"
#include "telesim/errors.hpp"
#include "telesim/loss.hpp"

namespace telesim {

enum class RobotKind { OneDof, TwoLink };

struct RobotSpec {
    RobotKind kind = RobotKind::OneDof;
    double mass = 1.0;  // one_dof
    TwoLinkParams link;  // two_link
};

inline int dof_of(RobotKind kind) { return kind == RobotKind::OneDof ? 1 : 2; }

enum class OperatorKind { Zero, Pulse, Sine, Random };

struct OperatorProfile {
    OperatorKind kind = OperatorKind::Pulse;
    double amplitude = 1.0;  // N
    double start = 1.0;      // s
    double width = 2.0;      // s
    double frequency = 0.5;  // Hz, sine
    double hold = 0.1;       // s, random: interval between new force levels
    std::uint64_t seed = 0;
};

/// Operator force F_h(t). Random draws a fresh level in [-amplitude, amplitude] per hold interval,
/// as a pure function of (seed, interval index).
inline double operator_force(double t, const OperatorProfile& p) {
    switch (p.kind) {
        case OperatorKind::Zero:
            return 0.0;
        case OperatorKind::Pulse:
            return (t >= p.start && t < p.start + p.width) ? p.amplitude : 0.0;
        case OperatorKind::Sine:
            return p.amplitude * std::sin(2.0 * std::numbers::pi * p.frequency * t);
        case OperatorKind::Random: {
            const auto k = static_cast<std::uint64_t>(std::max(0.0, std::floor(t / p.hold)));
            std::mt19937_64 gen(p.seed ^ (k * 0x9E3779B97F4A7C15ULL));
            const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
            return p.amplitude * (2.0 * u - 1.0);
        }
    }
    return 0.0;
}

/// Time from which F_h is identically zero; infinity when it never switches off.
inline double force_end_time(const OperatorProfile& p) {
    switch (p.kind) {
        case OperatorKind::Zero: return 0.0;
        case OperatorKind::Pulse: return p.start + p.width;
        default: return std::numeric_limits<double>::infinity();
    }
}

struct EnvironmentSpec {
    bool enabled = true;
    double stiffness = 1.0;  // K_e, N/m
    double damping = 0.5;    // B_e, N s/m
    double mass = 0.0;       // M_e, kg
};

/// F_e = M_e q'' + B_e q' + K_e q, applied joint-wise.
template <int N>
Vec<N> environment_force(const JointState<N>& slave, const EnvironmentSpec& env,
                         const Vec<N>& qdd = Vec<N>::Zero()) {
    if (!env.enabled) {
        return Vec<N>::Zero();
    }
    return env.mass * qdd + env.damping * slave.qd + env.stiffness * slave.q;
}

struct ScenarioConfig {
    RobotSpec master;
    RobotSpec slave;

    // Gains are diagonal; a single entry is broadcast to every joint.
    std::vector<double> b{1.2};
    std::vector<double> lambda{1.0};
    bool matched_gains = true;
    std::vector<double> K_m;  // used when matched_gains is false; empty means "= b"
    std::vector<double> K_s;
    std::vector<double> K1;   // empty means lambda b / 2
    std::vector<double> K2;

    LossProfile loss;
    std::optional<LossProfile> backward_loss;  // shared with forward when unset

    double dt = 1e-4;
    double duration = 60.0;
    std::vector<double> q_m0{0.0};
    std::vector<double> q_s0{0.0};
    std::vector<double> qd_m0{0.0};
    std::vector<double> qd_s0{0.0};

    OperatorProfile op;
    EnvironmentSpec env;
    ErrorMode error_mode = ErrorMode::Simulation;
    std::uint64_t seed = 0;

    int transport_delay = 0;  // 0 or 1 sample
    bool coupling = true;     // false disconnects both ports (no coordination force)
    OperatorTerm operator_term = OperatorTerm::Omit;
    std::size_t trace_every = 1;

    double settle_fraction = 0.05;
    double settle_hold = 5.0;
    double settle_tolerance = 0.0;  // absolute; 0 derives it from settle_fraction
    BoundednessLimits limits;

    int dof() const { return dof_of(master.kind); }

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

    const LossProfile& backward() const { return backward_loss ? *backward_loss : loss; }

    void validate() const {
        check_robot(master, "robot.master");
        check_robot(slave, "robot.slave");
        if (master.kind != slave.kind) {
            throw ConfigError("robot.model", "master and slave must have the same structure");
        }
        const std::size_t n = static_cast<std::size_t>(dof());
        check_positive_list(b, "gains.b", n);
        check_positive_list(lambda, "gains.lambda", n);
        if (!matched_gains) {
            check_positive_list(K_m, "gains.K_m", n, true);
            check_positive_list(K_s, "gains.K_s", n, true);
            check_positive_list(K1, "gains.K1", n, true);
            check_positive_list(K2, "gains.K2", n, true);
        }
        check_loss(loss, "loss");
        if (backward_loss) {
            check_loss(*backward_loss, "loss.backward");
        }
        if (!(dt > 0.0) || !std::isfinite(dt)) {
            throw ConfigError("sim.dt", "must be positive");
        }
        if (!(duration >= dt) || !std::isfinite(duration)) {
            throw ConfigError("sim.duration", "must be finite and >= sim.dt");
        }
        check_list(q_m0, "sim.q_m0", n);
        check_list(q_s0, "sim.q_s0", n);
        check_list(qd_m0, "sim.qd_m0", n);
        check_list(qd_s0, "sim.qd_s0", n);
        if (op.kind == OperatorKind::Pulse && !(op.width >= 0.0)) {
            throw ConfigError("operator.width", "must be >= 0");
        }
        if (op.kind == OperatorKind::Random && !(op.hold > 0.0)) {
            throw ConfigError("operator.hold", "must be positive");
        }
        if (!std::isfinite(op.amplitude)) {
            throw ConfigError("operator.amplitude", "must be finite");
        }
        if (!(env.stiffness >= 0.0)) {
            throw ConfigError("environment.stiffness", "must be >= 0 (passive environment)");
        }
        if (!(env.damping >= 0.0)) {
            throw ConfigError("environment.damping", "must be >= 0 (passive environment)");
        }
        if (!(env.mass >= 0.0)) {
            throw ConfigError("environment.mass", "must be >= 0");
        }
        if (transport_delay != 0 && transport_delay != 1) {
            throw ConfigError("sim.transport_delay", "must be 0 or 1");
        }
        if (trace_every == 0) {
            throw ConfigError("sim.trace_every", "must be >= 1");
        }
        if (!(settle_fraction > 0.0)) {
            throw ConfigError("sim.settle_fraction", "must be positive");
        }
        if (!(settle_hold >= 0.0)) {
            throw ConfigError("sim.settle_hold", "must be >= 0");
        }
        if (!(settle_tolerance >= 0.0)) {
            throw ConfigError("sim.settle_tolerance", "must be >= 0");
        }
    }

private:
    static void check_robot(const RobotSpec& r, const std::string& key) {
        if (r.kind == RobotKind::OneDof) {
            if (!(r.mass > 0.0) || !std::isfinite(r.mass)) {
                throw ConfigError("robot.mass", "must be positive (" + key + ")");
            }
        } else {
            if (!(r.link.l1 > 0.0) || !(r.link.l2 > 0.0)) {
                throw ConfigError("robot.link_lengths", "must be positive (" + key + ")");
            }
            if (!(r.link.m1 > 0.0) || !(r.link.m2 > 0.0)) {
                throw ConfigError("robot.link_masses", "must be positive (" + key + ")");
            }
        }
    }

    static void check_list(const std::vector<double>& v, const std::string& key, std::size_t n) {
        if (v.size() != 1 && v.size() != n) {
            throw ConfigError(key, "expected 1 or " + std::to_string(n) + " values");
        }
        for (double x : v) {
            if (!std::isfinite(x)) {
                throw ConfigError(key, "must be finite");
            }
        }
    }

    static void check_positive_list(const std::vector<double>& v, const std::string& key, std::size_t n,
                                    bool allow_empty = false) {
        if (allow_empty && v.empty()) {
            return;
        }
        check_list(v, key, n);
        for (double x : v) {
            if (!(x > 0.0)) {
                throw ConfigError(key, "must be strictly positive");
            }
        }
    }

    static void check_loss(const LossProfile& p, const std::string& prefix) {
        if (!(p.period > 0.0) || !std::isfinite(p.period)) {
            throw ConfigError(prefix + ".period", "must be positive");
        }
        if (!(p.alpha >= 0.0) || !(p.alpha < p.period)) {
            throw ConfigError(prefix + ".alpha", "must satisfy 0 <= alpha < period");
        }
        if (p.harmonics < 1) {
            throw ConfigError(prefix + ".harmonics", "must be >= 1");
        }
        if (!std::isfinite(p.phase)) {
            throw ConfigError(prefix + ".phase", "must be finite");
        }
    }
};

template <int N>
Vec<N> broadcast(const std::vector<double>& v) {
    Vec<N> out;
    for (int i = 0; i < N; ++i) {
        out(i) = v.size() == 1 ? v[0] : v[static_cast<std::size_t>(i)];
    }
    return out;
}

template <int N>
Gains<N> make_gains(const ScenarioConfig& c) {
    const Vec<N> b = broadcast<N>(c.b);
    const Vec<N> lambda = broadcast<N>(c.lambda);
    Gains<N> g = Gains<N>::matched(b, lambda);
    if (!c.matched_gains) {
        if (!c.K_m.empty()) g.K_m = broadcast<N>(c.K_m);
        if (!c.K_s.empty()) g.K_s = broadcast<N>(c.K_s);
        if (!c.K1.empty()) g.K1 = broadcast<N>(c.K1);
        if (!c.K2.empty()) g.K2 = broadcast<N>(c.K2);
    }
    g.validate();
    return g;
}

/// The baseline 1-DOF setup: M = 1, b = 1.2, lambda = 1, 1 N pulse from 1 s to 3 s,
/// spring-damper environment, no loss.
inline ScenarioConfig reference_scenario() {
    ScenarioConfig c;
    c.loss.period = 10.0;
    c.loss.alpha = 0.0;
    return c;
}

}  // namespace telesim
