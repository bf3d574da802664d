#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "telesim/energy.hpp"
#include "telesim/sim.hpp"

using namespace telesim;
using Catch::Approx;

TEST_CASE("tracking errors compare each robot with the other's starred position") {
    const TrackingError<1> e =
        tracking_errors<1>(Vec<1>::Constant(2.0), Vec<1>::Constant(0.5), Vec<1>::Constant(0.5), Vec<1>::Constant(2.0));
    CHECK(e.e_m(0) == 1.5);
    CHECK(e.e_s(0) == -1.5);
    const TrackingError<1> same =
        tracking_errors<1>(Vec<1>::Constant(0.3), Vec<1>::Constant(0.3), Vec<1>::Zero(), Vec<1>::Zero());
    CHECK(same.e_m(0) == 0.0);
}

TEST_CASE("analysis-mode starred positions scale by L and pick up L' q") {
    JointState<1> m{Vec<1>::Constant(2.0), Vec<1>::Constant(0.5)};
    JointState<1> s{Vec<1>::Constant(-1.0), Vec<1>::Constant(0.25)};
    const StarredPositions<1> st = analysis_starred<1>(0.5, 3.0, 0.8, -1.0, m, s);
    CHECK(st.q_m(0) == 1.0);
    CHECK(st.qd_m(0) == Approx(3.0 * 2.0 + 0.5 * 0.5));
    CHECK(st.q_s(0) == Approx(-0.8));
    CHECK(st.qd_s(0) == Approx(1.0 + 0.8 * 0.25));
}

TEST_CASE("Lyapunov value from its terms") {
    const Gains<1> g = Gains<1>::matched(1.2, 1.0);
    const OneDofModel model(1.0);
    LyapunovInputs<1> in{&model, &model, {}, {}, Vec<1>::Zero(), Vec<1>::Zero()};
    CHECK(lyapunov_value<1>(in, {}, {}, g) == 0.0);
    in.r_m = Vec<1>::Constant(1.0);
    CHECK(lyapunov_value<1>(in, {}, {}, g) == 0.5);

    EnergyLedger ledger;
    ledger.supply_env = 0.25;
    ledger.supply_op = 2.0;
    ledger.diss_forward = 0.5;
    ledger.diss_backward = 0.1;
    TrackingError<1> e;
    e.e_m = Vec<1>::Constant(1.0);
    // 0.5 (1 + 0.6) + 0.25 + 0.3
    CHECK(lyapunov_value<1>(in, e, ledger, g, OperatorTerm::Omit) == Approx(1.35));
    CHECK(lyapunov_value<1>(in, e, ledger, g, OperatorTerm::Subtract) == Approx(-0.65));
}

TEST_CASE("closed-form V' for matched gains") {
    const Gains<1> g = Gains<1>::matched(1.2, 1.0);
    CHECK(vdot_closed_form<1>({}, g) == 0.0);
    TrackingError<1> e;
    e.ed_s = Vec<1>::Constant(1.0);
    CHECK(vdot_closed_form<1>(e, g) == Approx(-0.3).epsilon(1e-15));
    Gains<1> off = g;
    off.K1(0) = 2.0;
    CHECK_THROWS_AS(vdot_closed_form<1>(e, off), std::invalid_argument);
}

TEST_CASE("both accumulations of V1 agree on random wave samples") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> loss(0.0, 1.0);
    const Gains<1> g = Gains<1>::matched(1.2, 1.0);
    EnergyLedger ledger;
    PowerSample prev = power_sample<1>(exchange<1>(Vec<1>::Zero(), Vec<1>::Zero(), g, {}), Vec<1>::Zero(), Vec<1>::Zero());
    for (int k = 0; k < 10000; ++k) {
        const CoordinationState<1> c =
            exchange<1>(Vec<1>::Constant(u(gen)), Vec<1>::Constant(u(gen)), g, {loss(gen), loss(gen)});
        const PowerSample now = power_sample<1>(c, Vec<1>::Zero(), Vec<1>::Zero());
        CHECK(now.forward >= 0.0);
        CHECK(now.backward >= 0.0);
        accumulate(ledger, prev, now, 1e-3);
        prev = now;
    }
    CHECK(wave_energy_v1(ledger) == Approx(ledger.V1_ports).margin(1e-10));
    CHECK(wave_energy_v1(ledger) > 0.0);
}

TEST_CASE("trapezoidal accumulation of constant and linear power") {
    EnergyLedger ledger;
    PowerSample a;
    a.env = 1.0;
    a.op = 2.0;
    PowerSample b = a;
    b.env = 3.0;
    accumulate(ledger, a, b, 0.5);
    CHECK(ledger.supply_env == 1.0);
    CHECK(ledger.supply_op == 1.0);
}

TEST_CASE("error identity residual is zero along simulated trajectories") {
    for (ErrorMode mode : {ErrorMode::Simulation, ErrorMode::Analysis}) {
        ScenarioConfig c = reference_scenario();
        c.duration = 5.0;
        c.dt = 1e-3;
        c.op.kind = OperatorKind::Random;
        c.op.hold = 0.2;
        c.q_m0 = {0.4};
        c.error_mode = mode;
        const RunResult<1> r = run_collect<1>(c);
        double worst = 0.0;
        for (const TraceRecord<1>& rec : r.trace) {
            const auto [res_s, res_m] = error_r_identity_residual<1>(rec.channel, rec.errors, Vec<1>::Ones());
            worst = std::max({worst, std::abs(res_s(0)), std::abs(res_m(0))});
        }
        CHECK(worst < 1e-9);
        CHECK(error_r_identity_residual<1>(CoordinationState<1>{}, TrackingError<1>{}, Vec<1>::Ones()).first(0) == 0.0);
    }
}

TEST_CASE("finite-difference slope of V matches the closed form without loss") {
    ScenarioConfig c = reference_scenario();
    c.op.kind = OperatorKind::Zero;
    c.q_m0 = {1.0};
    c.qd_s0 = {0.5};
    c.dt = 1e-5;
    c.duration = 2.0;
    const RunResult<1> r = run_collect<1>(c);
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < r.trace.size(); ++k) {
        const TraceRecord<1>& rec = r.trace[k];
        REQUIRE(std::isfinite(rec.vdot_closed));
        if (std::abs(rec.vdot_closed) > 1e-3) {
            worst = std::max(worst, std::abs(rec.dV_fd - rec.vdot_closed) / std::abs(rec.vdot_closed));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("with the loss pulse, V still follows the closed form between window edges") {
    ScenarioConfig c = reference_scenario();
    c.op.kind = OperatorKind::Zero;
    c.q_m0 = {1.0};
    c.loss.alpha = 0.5;
    c.loss.phase = 0.5;
    c.dt = 1e-4;
    c.duration = 2.0;
    const RunResult<1> r = run_collect<1>(c);
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < r.trace.size(); ++k) {
        const TraceRecord<1>& rec = r.trace[k];
        if (r.trace[k - 1].L != rec.L || r.trace[k + 1].L != rec.L) {
            continue;
        }
        if (std::abs(rec.vdot_closed) > 1e-3) {
            worst = std::max(worst, std::abs(rec.dV_fd - rec.vdot_closed) / std::abs(rec.vdot_closed));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("no loss means no wave energy") {
    ScenarioConfig c = reference_scenario();
    c.duration = 10.0;
    c.dt = 1e-3;
    const RunResult<1> r = run_collect<1>(c);
    for (const TraceRecord<1>& rec : r.trace) {
        CHECK(std::abs(rec.V1) < 1e-12);
    }
}

TEST_CASE("boundedness report") {
    SECTION("zero input gives zero maxima") {
        std::vector<BoundednessSample> samples(100);
        const BoundednessReport rep = boundedness_report(samples, 0.01);
        CHECK(rep.max_q == 0.0);
        CHECK(rep.max_Vdd == 0.0);
        CHECK(rep.vdot_converged);
        CHECK(rep.bounded());
    }
    SECTION("quantities over the bound are flagged") {
        std::vector<BoundednessSample> samples(10);
        samples[4].qd = 50.0;
        BoundednessLimits lim;
        lim.bound = 10.0;
        const BoundednessReport rep = boundedness_report(samples, 0.1, lim);
        REQUIRE(rep.flags.size() == 1);
        CHECK(rep.flags[0] == "qd");
    }
    SECTION("V'' and the tail mean come from the V trace") {
        std::vector<BoundednessSample> samples(20);
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const double t = 0.5 * static_cast<double>(k);
            samples[k].V = t * t;    // V'' = 2
            samples[k].dV_fd = 2.0 * t;
        }
        const BoundednessReport rep = boundedness_report(samples, 0.5);
        CHECK(rep.max_Vdd == Approx(2.0));
        // last 10 % = last 2 samples, t = 9 and 9.5
        CHECK(rep.tail_mean_abs_dV == Approx(18.5));
        CHECK_FALSE(rep.vdot_converged);
    }
}
