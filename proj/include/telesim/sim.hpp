#pragma once

// Fixed-step closed-loop simulation of master, lossy wave channel and slave.
//
// Each step [t_k, t_k + dt):
//   - the loss factors and the operator force are sampled once, at the step midpoint, and
//     held for the whole step, so loss-window edges fall between steps;
//   - the channel is algebraic and is re-evaluated at every RK4 stage together with the
//     environment force, so the closed loop is integrated as one smooth ODE per step;
//   - energy integrals are accumulated with the trapezoidal rule from the start and end
//     of the step, both evaluated with the step's held inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "telesim/channel.hpp"
#include "telesim/dynamics.hpp"
#include "telesim/energy.hpp"
#include "telesim/errors.hpp"
#include "telesim/integrator.hpp"
#include "telesim/loss.hpp"
#include "telesim/scenario.hpp"

namespace telesim {

template <int N>
std::unique_ptr<RobotModel<N>> make_model(const RobotSpec& spec) {
    if (dof_of(spec.kind) != N) {
        throw ConfigError("robot.model", "model has " + std::to_string(dof_of(spec.kind)) +
                                             " joints, simulation was instantiated for " + std::to_string(N));
    }
    if constexpr (N == 1) {
        return std::make_unique<OneDofModel>(spec.mass);
    } else if constexpr (N == 2) {
        return std::make_unique<TwoLinkModel>(spec.link);
    } else {
        throw ConfigError("robot.model", "unsupported joint count");
    }
}

template <int N>
struct TraceRecord {
    double t = 0.0;
    JointState<N> master;
    JointState<N> slave;
    Vec<N> qdd_m = Vec<N>::Zero();
    Vec<N> qdd_s = Vec<N>::Zero();
    CoordinationState<N> channel;  // r_m, r_s, r_md, r_sd, F_md, F_sd, waves, starred r
    Vec<N> F_h = Vec<N>::Zero();
    Vec<N> F_e = Vec<N>::Zero();
    double L = 1.0;                // forward loss factor applied over [t, t + dt)
    TrackingError<N> errors;
    EnergyLedger ledger;
    double V = 0.0;                // with the configured operator term
    double V_subtract = 0.0;       // operator supply subtracted
    double V1 = 0.0;
    double dV_fd = 0.0;            // centred difference of V
    double vdot_closed = std::numeric_limits<double>::quiet_NaN();  // NaN unless gains are matched
};

/// Scalar time series for a trace row: max-abs over joints.
template <int N>
double max_abs(const Vec<N>& v) {
    return v.cwiseAbs().maxCoeff();
}

template <int N>
class Simulation {
public:
    using State = Eigen::Matrix<double, 6 * N, 1>;

    explicit Simulation(const ScenarioConfig& config)
        : config_(config),
          master_(nullptr),
          slave_(nullptr),
          loss_forward_(config.loss),
          loss_backward_(config.backward()) {
        config_.validate();
        master_ = make_model<N>(config_.master);
        slave_ = make_model<N>(config_.slave);
        gains_ = make_gains<N>(config_);
        matched_ = gains_.matched_mode();
        config_.op.seed = config_.seed;

        x_.setZero();
        seg(x_, 0) = broadcast<N>(config_.q_m0);
        seg(x_, 2) = broadcast<N>(config_.q_s0);
        const Vec<N> qd_m0 = broadcast<N>(config_.qd_m0);
        const Vec<N> qd_s0 = broadcast<N>(config_.qd_s0);
        seg(x_, 1) = qd_m0 + gains_.lambda.cwiseProduct(seg(x_, 0));
        seg(x_, 3) = qd_s0 + gains_.lambda.cwiseProduct(seg(x_, 2));
        seg(x_, 4) = seg(x_, 0);
        seg(x_, 5) = seg(x_, 2);
        steps_ = config_.steps();
    }

    const ScenarioConfig& config() const { return config_; }
    const Gains<N>& gains() const { return gains_; }
    const RobotModel<N>& master_model() const { return *master_; }
    const RobotModel<N>& slave_model() const { return *slave_; }
    std::size_t steps() const { return steps_; }
    std::size_t step_index() const { return k_; }
    double time() const { return static_cast<double>(k_) * config_.dt; }
    bool done() const { return k_ >= steps_; }
    const State& state() const { return x_; }
    const EnergyLedger& ledger() const { return ledger_; }

    /// Record for the current sample, then advance the state by one step.
    /// dV_fd is left at zero; `run` fills it once the neighbouring samples exist.
    TraceRecord<N> step() {
        const double t = time();
        const double dt = config_.dt;
        const Inputs in = inputs_at(t);

        const Eval start = eval(x_, in);
        TraceRecord<N> rec = make_record(t, x_, start, in);

        const State next = rk4_step([&](double, const State& x) { return eval(x, in).dx; }, t, x_, dt);
        if (!next.allFinite()) {
            throw DivergenceError(k_ + 1, t + dt);
        }
        const Eval end = eval(next, in);
        accumulate(ledger_, power_sample<N>(start.c, in.F_h, start.F_e), power_sample<N>(end.c, in.F_h, end.F_e),
                   dt);
        if (config_.transport_delay == 1) {
            previous_ = start.c;
        }
        x_ = next;
        ++k_;
        return rec;
    }

    /// V and its subtract-form counterpart at the current state (after the last step).
    std::pair<double, double> current_V() const {
        const double t = time();
        const Inputs in = inputs_at(t);
        const Eval ev = eval(x_, in);
        const TraceRecord<N> rec = make_record(t, x_, ev, in);
        return {rec.V, rec.V_subtract};
    }

private:
    struct Inputs {
        double L_f = 1.0;
        double L_b = 1.0;
        double Ld_f = 0.0;  // at the sample instant, analysis-mode errors only
        double Ld_b = 0.0;
        double L_f_sample = 1.0;
        double L_b_sample = 1.0;
        Vec<N> F_h = Vec<N>::Zero();
    };

    struct Eval {
        State dx;
        CoordinationState<N> c;
        JointState<N> m;
        JointState<N> s;
        Vec<N> F_e = Vec<N>::Zero();
        Vec<N> qdd_m = Vec<N>::Zero();
        Vec<N> qdd_s = Vec<N>::Zero();
    };

    static auto seg(State& x, int i) { return x.template segment<N>(i * N); }
    static auto seg(const State& x, int i) { return x.template segment<N>(i * N); }

    Inputs inputs_at(double t) const {
        Inputs in;
        const double mid = t + 0.5 * config_.dt;
        in.L_f = loss_forward_(mid);
        in.L_b = loss_backward_(mid);
        in.Ld_f = loss_forward_.d1(t);
        in.Ld_b = loss_backward_.d1(t);
        in.F_h = Vec<N>::Constant(operator_force(mid, config_.op));
        return in;
    }

    Eval eval(const State& x, const Inputs& in) const {
        Eval ev;
        const Vec<N>& lambda = gains_.lambda;
        const Vec<N> q_m = seg(x, 0);
        const Vec<N> r_m = seg(x, 1);
        const Vec<N> q_s = seg(x, 2);
        const Vec<N> r_s = seg(x, 3);
        ev.m.q = q_m;
        ev.m.qd = r_m - lambda.cwiseProduct(q_m);
        ev.s.q = q_s;
        ev.s.qd = r_s - lambda.cwiseProduct(q_s);

        const LossFactors lf{in.L_f, in.L_b};
        if (!config_.coupling) {
            ev.c.r_m = r_m;
            ev.c.r_s = r_s;
            ev.c.L_forward = in.L_f;
            ev.c.L_backward = in.L_b;
            ev.c.r_m_star = in.L_f * r_m;
            ev.c.r_s_star = in.L_b * r_s;
        } else if (config_.transport_delay == 1) {
            ev.c = exchange_delayed<N>(r_m, r_s, gains_, lf, previous_);
        } else {
            ev.c = exchange<N>(r_m, r_s, gains_, lf);
        }

        const Vec<N> rd_m = reduced_accel<N>(*master_, ev.m, r_m, in.F_h, Vec<N>(-ev.c.F_md));

        Vec<N> rd_s;
        const EnvironmentSpec& env = config_.env;
        if (env.enabled && env.mass > 0.0) {
            // Fold M_e q'' into the slave inertia: (M_s + M_e) r_s' = F_sd - C r_s - B q' - K q + M_e lambda q'.
            const Mat<N> m_eff = slave_->inertia(q_s) + env.mass * Mat<N>::Identity();
            const Vec<N> rhs = ev.c.F_sd - slave_->coriolis(q_s, ev.s.qd) * r_s - env.damping * ev.s.qd -
                               env.stiffness * q_s + env.mass * lambda.cwiseProduct(ev.s.qd);
            rd_s = detail::solve_inertia<N>(m_eff, rhs);
            ev.qdd_s = rd_s - lambda.cwiseProduct(ev.s.qd);
            ev.F_e = environment_force<N>(ev.s, env, ev.qdd_s);
        } else {
            ev.F_e = environment_force<N>(ev.s, env);
            rd_s = reduced_accel<N>(*slave_, ev.s, r_s, Vec<N>(-ev.F_e), ev.c.F_sd);
            ev.qdd_s = rd_s - lambda.cwiseProduct(ev.s.qd);
        }
        ev.qdd_m = rd_m - lambda.cwiseProduct(ev.m.qd);

        seg(ev.dx, 0) = ev.m.qd;
        seg(ev.dx, 1) = rd_m;
        seg(ev.dx, 2) = ev.s.qd;
        seg(ev.dx, 3) = rd_s;
        seg(ev.dx, 4) = ev.c.r_m_star - lambda.cwiseProduct(seg(x, 4));
        seg(ev.dx, 5) = ev.c.r_s_star - lambda.cwiseProduct(seg(x, 5));
        return ev;
    }

    TraceRecord<N> make_record(double t, const State& x, const Eval& ev, const Inputs& in) const {
        TraceRecord<N> rec;
        rec.t = t;
        rec.master = ev.m;
        rec.slave = ev.s;
        rec.qdd_m = ev.qdd_m;
        rec.qdd_s = ev.qdd_s;
        rec.channel = ev.c;
        rec.F_h = in.F_h;
        rec.F_e = ev.F_e;
        rec.L = in.L_f;

        StarredPositions<N> star;
        if (config_.error_mode == ErrorMode::Simulation) {
            star.q_m = seg(x, 4);
            star.q_s = seg(x, 5);
            star.qd_m = ev.c.r_m_star - gains_.lambda.cwiseProduct(star.q_m);
            star.qd_s = ev.c.r_s_star - gains_.lambda.cwiseProduct(star.q_s);
        } else {
            star = analysis_starred<N>(in.L_f, in.Ld_f, in.L_b, in.Ld_b, ev.m, ev.s);
        }
        rec.errors = tracking_errors<N>(star, ev.m, ev.s);
        rec.ledger = ledger_;

        LyapunovInputs<N> li{master_.get(), slave_.get(), ev.m, ev.s, ev.c.r_m, ev.c.r_s};
        rec.V = lyapunov_value<N>(li, rec.errors, ledger_, gains_, config_.operator_term);
        rec.V_subtract = lyapunov_value<N>(li, rec.errors, ledger_, gains_, OperatorTerm::Subtract);
        rec.V1 = ledger_.V1();
        if (matched_) {
            rec.vdot_closed = vdot_closed_form<N>(rec.errors, gains_);
        }
        return rec;
    }

    ScenarioConfig config_;
    std::unique_ptr<RobotModel<N>> master_;
    std::unique_ptr<RobotModel<N>> slave_;
    LossSignal loss_forward_;
    LossSignal loss_backward_;
    Gains<N> gains_;
    bool matched_ = true;
    State x_;
    EnergyLedger ledger_;
    CoordinationState<N> previous_;
    std::size_t k_ = 0;
    std::size_t steps_ = 0;
};

struct RunSummary {
    std::size_t steps = 0;
    std::size_t records = 0;
    bool diverged = false;
    std::string error;
    std::size_t failed_step = 0;

    double final_time = 0.0;
    double final_e_m = 0.0;
    double final_e_s = 0.0;
    // Transparency figure used to rank runs: RMS of |q_m - q_s| over the whole run.
    // The instantaneous end value decays to round-off in every stable run and cannot rank anything.
    double final_error = 0.0;
    double end_error = 0.0;   // |q_m - q_s| at the last sample
    double tail_error = 0.0;  // max |q_m - q_s| over the last loss period (or last 10 s)

    double force_end = 0.0;
    double max_dV_after_force = 0.0;  // largest per-step increase of V once F_h is off
    double settle_tolerance = 0.0;
    double settling_time = std::numeric_limits<double>::quiet_NaN();
    bool settled = false;

    double min_V = std::numeric_limits<double>::infinity();
    double max_V_subtract_increase = -std::numeric_limits<double>::infinity();
    double min_V1 = std::numeric_limits<double>::infinity();
    double min_wave_dissipation = std::numeric_limits<double>::infinity();  // min of u_m^2 - u_s^2, v_s^2 - v_m^2
    double max_v1_form_gap = 0.0;
    double max_slave_constraint = 0.0;   // (b + K_s) r_sd = ...
    double max_master_constraint = 0.0;  // (b + K_m) r_md = ...
    double max_matched_reduction = std::numeric_limits<double>::quiet_NaN();
    double max_error_identity = 0.0;     // r_m* - r_s = e_m' + lambda e_m and its mirror

    BoundednessReport report;
};

template <int N>
using TraceObserver = std::function<void(const TraceRecord<N>&)>;

template <int N>
struct RunResult {
    RunSummary summary;
    std::vector<TraceRecord<N>> trace;  // only filled by run_collect
};

namespace detail {

template <int N>
class SummaryBuilder {
public:
    SummaryBuilder(const ScenarioConfig& c, const Gains<N>& g, std::size_t steps)
        : config_(c),
          gains_(g),
          matched_(g.coordination_matched()),
          monitor_(c.dt, steps, c.limits) {
        s_.steps = steps;
        s_.force_end = force_end_time(c.op);
        const double offset =
            (broadcast<N>(c.q_m0) - broadcast<N>(c.q_s0)).cwiseAbs().maxCoeff();
        if (c.settle_tolerance > 0.0) {
            s_.settle_tolerance = c.settle_tolerance;
        } else {
            s_.settle_tolerance = offset > 0.0 ? c.settle_fraction * offset : c.settle_fraction;
        }
        tail_window_ = c.loss.alpha > 0.0 ? c.loss.period : std::min(10.0, c.duration);
        if (matched_ && c.coupling) {
            s_.max_matched_reduction = 0.0;
        }
    }

    /// `next_V` is V at the following sample, used for the per-step increase.
    void add(const TraceRecord<N>& r, double next_V, double next_V_subtract) {
        const double err = max_abs<N>(Vec<N>(r.master.q - r.slave.q));
        sq_sum_ += err * err;
        s_.final_time = r.t;
        s_.end_error = err;
        s_.final_e_m = max_abs<N>(r.errors.e_m);
        s_.final_e_s = max_abs<N>(r.errors.e_s);
        if (r.t >= config_.duration - tail_window_ - 1e-12) {
            s_.tail_error = std::max(s_.tail_error, err);
        }

        // settling: first time the error stays inside the band for settle_hold seconds
        if (err < s_.settle_tolerance) {
            if (!in_band_) {
                in_band_ = true;
                band_start_ = r.t;
            }
            if (!s_.settled && r.t + config_.dt - band_start_ >= config_.settle_hold - 1e-12) {
                s_.settled = true;
                s_.settling_time = band_start_;
            }
        } else {
            in_band_ = false;
        }

        if (r.t >= s_.force_end) {
            s_.max_dV_after_force = std::max(s_.max_dV_after_force, next_V - r.V);
        }
        s_.max_V_subtract_increase = std::max(s_.max_V_subtract_increase, next_V_subtract - r.V_subtract);
        s_.min_V = std::min(s_.min_V, r.V);
        s_.min_V1 = std::min(s_.min_V1, r.V1);

        const WaveSample<N>& w = r.channel.waves;
        for (int i = 0; i < N; ++i) {
            const double fwd = w.u_m(i) * w.u_m(i) - w.u_m_star(i) * w.u_m_star(i);
            const double bwd = w.v_s(i) * w.v_s(i) - w.v_s_star(i) * w.v_s_star(i);
            s_.min_wave_dissipation = std::min({s_.min_wave_dissipation, fwd, bwd});
        }
        s_.max_v1_form_gap = std::max(s_.max_v1_form_gap, std::abs(r.ledger.V1() - r.ledger.V1_ports));
        if (config_.coupling) {
            s_.max_slave_constraint =
                std::max(s_.max_slave_constraint, max_abs<N>(slave_constraint_residual<N>(r.channel, gains_)));
            s_.max_master_constraint =
                std::max(s_.max_master_constraint, max_abs<N>(master_constraint_residual<N>(r.channel, gains_)));
            if (matched_) {
                const auto [a, b] = matched_reduction_residual<N>(r.channel);
                s_.max_matched_reduction = std::max({s_.max_matched_reduction, max_abs<N>(a), max_abs<N>(b)});
            }
        }

        const auto [res_s, res_m] = error_r_identity_residual<N>(r.channel, r.errors, gains_.lambda);
        s_.max_error_identity = std::max({s_.max_error_identity, max_abs<N>(res_s), max_abs<N>(res_m)});

        BoundednessSample b;
        b.q = std::max(max_abs<N>(r.master.q), max_abs<N>(r.slave.q));
        b.qd = std::max(max_abs<N>(r.master.qd), max_abs<N>(r.slave.qd));
        b.qdd = std::max(max_abs<N>(r.qdd_m), max_abs<N>(r.qdd_s));
        b.r = std::max(max_abs<N>(r.channel.r_m), max_abs<N>(r.channel.r_s));
        b.e = std::max(max_abs<N>(r.errors.e_m), max_abs<N>(r.errors.e_s));
        b.ed = std::max(max_abs<N>(r.errors.ed_m), max_abs<N>(r.errors.ed_s));
        b.V = r.V;
        b.dV_fd = r.dV_fd;
        monitor_.add(b);
        ++s_.records;
    }

    RunSummary finish() {
        s_.final_error = s_.records > 0 ? std::sqrt(sq_sum_ / static_cast<double>(s_.records)) : 0.0;
        s_.report = monitor_.finish();
        return s_;
    }

    RunSummary& summary() { return s_; }

private:
    const ScenarioConfig& config_;
    const Gains<N>& gains_;
    bool matched_;
    BoundednessMonitor monitor_;
    RunSummary s_;
    double sq_sum_ = 0.0;
    double tail_window_ = 10.0;
    bool in_band_ = false;
    double band_start_ = 0.0;
};

}  // namespace detail

/// Runs the scenario to completion, streaming every finished record to `observer`.
/// On divergence the summary carries the error and everything emitted so far stays valid.
template <int N>
RunSummary run(const ScenarioConfig& config, const TraceObserver<N>& observer = {}) {
    Simulation<N> sim(config);
    const double dt = sim.config().dt;
    detail::SummaryBuilder<N> builder(sim.config(), sim.gains(), sim.steps());
    const std::size_t every = sim.config().trace_every;

    // Records are released one step late so dV_fd can use the centred difference.
    std::optional<TraceRecord<N>> prev;
    std::optional<TraceRecord<N>> cur;
    auto release = [&](TraceRecord<N>& r, double next_V, double next_V_subtract) {
        builder.add(r, next_V, next_V_subtract);
        if (observer && (builder.summary().records - 1) % every == 0) {
            observer(r);
        }
    };

    try {
        while (!sim.done()) {
            TraceRecord<N> rec = sim.step();
            if (cur) {
                cur->dV_fd = prev ? (rec.V - prev->V) / (2.0 * dt) : (rec.V - cur->V) / dt;
                if (prev) {
                    release(*prev, cur->V, cur->V_subtract);
                }
                prev = std::move(cur);
            }
            cur = std::move(rec);
        }
        const auto [v_end, v_end_sub] = sim.current_V();
        if (cur) {
            cur->dV_fd = prev ? (v_end - prev->V) / (2.0 * dt) : (v_end - cur->V) / dt;
            if (prev) {
                release(*prev, cur->V, cur->V_subtract);
            }
            release(*cur, v_end, v_end_sub);
        }
    } catch (const DivergenceError& e) {
        if (prev) {
            release(*prev, cur ? cur->V : prev->V, cur ? cur->V_subtract : prev->V_subtract);
        }
        if (cur) {
            release(*cur, cur->V, cur->V_subtract);
        }
        RunSummary s = builder.finish();
        s.diverged = true;
        s.error = e.what();
        s.failed_step = e.step();
        return s;
    }
    return builder.finish();
}

/// Same as `run`, but also keeps every emitted record.
template <int N>
RunResult<N> run_collect(const ScenarioConfig& config) {
    RunResult<N> out;
    out.trace.reserve(config.steps() / std::max<std::size_t>(1, config.trace_every) + 2);
    out.summary = run<N>(config, [&](const TraceRecord<N>& r) { out.trace.push_back(r); });
    return out;
}

/// Calls `fn(std::integral_constant<int, N>{})` with N matching the configured robot.
template <typename Fn>
decltype(auto) dispatch_dof(const ScenarioConfig& config, Fn&& fn) {
    switch (config.dof()) {
        case 1: return fn(std::integral_constant<int, 1>{});
        case 2: return fn(std::integral_constant<int, 2>{});
        default: throw ConfigError("robot.model", "unsupported joint count");
    }
}

}  // namespace telesim
