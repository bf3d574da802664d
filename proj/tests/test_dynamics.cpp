#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "telesim/dynamics.hpp"
#include "telesim/integrator.hpp"

using namespace telesim;
using Catch::Approx;

namespace {

TwoLinkParams arm() {
    TwoLinkParams p;
    p.l1 = 1.0;
    p.l2 = 0.8;
    p.m1 = 1.5;
    p.m2 = 0.7;
    return p;
}

oracle::TwoLinkGeometry geometry(const TwoLinkParams& p) {
    return {p.l1, p.l2, p.m1, p.m2, p.g};
}

}  // namespace

TEST_CASE("one-DOF model is a constant mass") {
    const OneDofModel m = one_dof_model(2.5);
    CHECK(m.inertia(Vec<1>::Constant(3.0))(0, 0) == 2.5);
    CHECK(m.coriolis(Vec<1>::Constant(1.0), Vec<1>::Constant(4.0))(0, 0) == 0.0);
    CHECK(m.gravity(Vec<1>::Constant(1.0))(0) == 0.0);
    CHECK(m.inertia_bounds().m1 < 2.5);
    CHECK(m.inertia_bounds().m2 > 2.5);
    CHECK_THROWS_WITH(one_dof_model(-1.0), Catch::Matchers::ContainsSubstring("robot.mass"));
    CHECK_THROWS_AS(one_dof_model(0.0), std::invalid_argument);
}

TEST_CASE("two-link inertia, gravity and Coriolis match a Jacobian-based derivation") {
    const TwoLinkParams p = arm();
    const TwoLinkModel model = two_link_model(p);
    const oracle::TwoLinkGeometry ref = geometry(p);
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> angle(-3.0, 3.0);
    for (int k = 0; k < 50; ++k) {
        const Vec<2> q(angle(gen), angle(gen));
        const Vec<2> qd(angle(gen), angle(gen));
        CHECK((model.inertia(q) - ref.inertia(q)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((model.gravity(q) - ref.gravity(q)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((model.coriolis(q, qd) * qd - ref.coriolis_times_qd(q, qd)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("two-link inertia is positive definite and inside its bounds on a grid") {
    const TwoLinkModel model = two_link_model(arm());
    const InertiaBounds b = model.inertia_bounds();
    REQUIRE(b.m1 > 0.0);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const Vec<2> q(-3.1 + 0.62 * i, -3.1 + 0.62 * j);
            const Eigen::SelfAdjointEigenSolver<Mat<2>> eig(model.inertia(q));
            CHECK(eig.eigenvalues().minCoeff() >= b.m1);
            CHECK(eig.eigenvalues().maxCoeff() <= b.m2);
        }
    }
}

TEST_CASE("M' - 2C is skew-symmetric") {
    const TwoLinkModel model = two_link_model(arm());
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        JointState<2> s;
        s.q = Vec<2>(u(gen), u(gen));
        s.qd = Vec<2>(u(gen), u(gen));
        const Vec<2> x(u(gen), u(gen));
        CHECK(std::abs(skew_residual<2>(model, s, x)) < 1e-6);
    }
}

TEST_CASE("reduced acceleration solves M r' = external + applied - C r") {
    const TwoLinkModel model = two_link_model(arm());
    JointState<2> s;
    s.q = Vec<2>(0.4, -1.1);
    s.qd = Vec<2>(0.3, 0.9);
    const Vec<2> r(0.7, -0.2);
    const Vec<2> ext(0.5, 0.1);
    const Vec<2> app(-0.3, 0.25);
    const Vec<2> rd = reduced_accel<2>(model, s, r, ext, app);
    const Vec<2> rhs = ext + app - model.coriolis(s.q, s.qd) * r;
    const Vec<2> dense = model.inertia(s.q).fullPivLu().solve(rhs);
    CHECK((rd - dense).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("passive output and control torque") {
    JointState<1> s;
    s.q = Vec<1>::Constant(2.0);
    s.qd = Vec<1>::Constant(0.5);
    CHECK(passive_output<1>(s, Vec<1>::Constant(1.5))(0) == Approx(3.5));

    const TwoLinkModel model = two_link_model(arm());
    JointState<2> rest;
    rest.q = Vec<2>(0.3, 0.2);
    const Vec<2> tau_bar(0.1, -0.2);
    const Vec<2> tau = control_torque<2>(model, rest, Vec<2>::Ones(), tau_bar);
    CHECK((tau - (model.gravity(rest.q) + tau_bar)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("full dynamics under the control torque and the reduced form give the same trajectory") {
    const TwoLinkModel model = two_link_model(arm());
    const Vec<2> lambda(1.0, 0.7);
    auto tau_bar = [](double t) { return Vec<2>(0.4 * std::sin(t), 0.2 * std::cos(1.3 * t)); };
    auto ext = [](double t) { return Vec<2>(0.1 * std::cos(0.5 * t), -0.15); };

    using S4 = Eigen::Matrix<double, 4, 1>;
    // full: [q, q'];  reduced: [q, r]
    auto full = [&](double t, const S4& x) {
        JointState<2> s{x.head<2>(), x.tail<2>()};
        const Vec<2> tau = control_torque<2>(model, s, lambda, tau_bar(t));
        S4 dx;
        dx << s.qd, full_accel<2>(model, s, tau, ext(t));
        return dx;
    };
    auto reduced = [&](double t, const S4& x) {
        const Vec<2> q = x.head<2>();
        const Vec<2> r = x.tail<2>();
        JointState<2> s{q, Vec<2>(r - lambda.cwiseProduct(q))};
        S4 dx;
        dx << s.qd, reduced_accel<2>(model, s, r, ext(t), tau_bar(t));
        return dx;
    };
    S4 xf;
    xf << 0.2, -0.4, 0.1, 0.3;
    S4 xr;
    xr << xf.head<2>(), xf.tail<2>() + lambda.cwiseProduct(xf.head<2>());
    const double dt = 1e-3;
    double max_gap = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double t = k * dt;
        xf = rk4_step(full, t, xf, dt);
        xr = rk4_step(reduced, t, xr, dt);
        max_gap = std::max(max_gap, (xf.head<2>() - xr.head<2>()).cwiseAbs().maxCoeff());
    }
    CHECK(max_gap < 1e-8);
}

TEST_CASE("free gravity-free arm conserves kinetic energy") {
    TwoLinkParams p = arm();
    p.gravity = false;
    const TwoLinkModel model = two_link_model(p);
    using S4 = Eigen::Matrix<double, 4, 1>;
    auto f = [&](double, const S4& x) {
        JointState<2> s{x.head<2>(), x.tail<2>()};
        S4 dx;
        dx << s.qd, full_accel<2>(model, s, Vec<2>::Zero(), Vec<2>::Zero());
        return dx;
    };
    S4 x;
    x << 0.1, 0.5, 1.2, -0.8;
    const double e0 = kinetic_energy<2>(model, {x.head<2>(), x.tail<2>()});
    double drift = 0.0;
    for (int k = 0; k < 100000; ++k) {
        x = rk4_step(f, k * 1e-4, x, 1e-4);
        drift = std::max(drift, std::abs(kinetic_energy<2>(model, {x.head<2>(), x.tail<2>()}) - e0));
    }
    CHECK(drift < 1e-6);
}

TEST_CASE("reduced dynamics are lossless: supplied work equals stored r^T M r / 2") {
    const TwoLinkModel model = two_link_model(arm());
    const Vec<2> lambda(1.0, 1.0);
    auto force = [](double t) { return Vec<2>(std::sin(2.0 * t), 0.5 * std::cos(t)); };
    using S5 = Eigen::Matrix<double, 5, 1>;  // q, r, work
    auto f = [&](double t, const S5& x) {
        const Vec<2> q = x.head<2>();
        const Vec<2> r = x.segment<2>(2);
        JointState<2> s{q, Vec<2>(r - lambda.cwiseProduct(q))};
        S5 dx;
        dx << s.qd, reduced_accel<2>(model, s, r, force(t), Vec<2>::Zero()), force(t).dot(r);
        return dx;
    };
    auto stored = [&](const S5& x) {
        const Vec<2> r = x.segment<2>(2);
        return 0.5 * r.dot(model.inertia(x.head<2>()) * r);
    };
    S5 x;
    x << 0.3, -0.2, 0.4, 0.1, 0.0;
    const double s0 = stored(x);
    for (int k = 0; k < 5000; ++k) {
        x = rk4_step(f, k * 1e-3, x, 1e-3);
    }
    CHECK(x(4) == Approx(stored(x) - s0).margin(1e-9));
}

TEST_CASE("gains: matched construction and validation") {
    const Gains<1> g = Gains<1>::matched(1.2, 1.0);
    CHECK(g.K_m(0) == 1.2);
    CHECK(g.K_s(0) == 1.2);
    CHECK(g.K1(0) == Approx(0.6));
    CHECK(g.matched_mode());
    Gains<1> bad = g;
    bad.b(0) = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    Gains<1> unmatched = g;
    unmatched.K_m(0) = 2.4;
    CHECK_FALSE(unmatched.coordination_matched());
    CHECK(unmatched.error_weights_matched());
}
