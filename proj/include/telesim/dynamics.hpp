#pragma once

// Robot models of the form M(q) q'' + C(q, q') q' + g(q) = tau + f_ext, the
// feedback-linearizing torque and the passive output r = q' + lambda q.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace telesim {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <int N>
struct JointState {
    Vec<N> q = Vec<N>::Zero();
    Vec<N> qd = Vec<N>::Zero();
};

/// Constants with m1 I < M(q) < m2 I.
struct InertiaBounds {
    double m1 = 0.0;
    double m2 = 0.0;
};

template <int N>
class RobotModel {
public:
    static constexpr int dof = N;

    virtual ~RobotModel() = default;

    virtual Mat<N> inertia(const Vec<N>& q) const = 0;
    /// Christoffel-symbol Coriolis matrix, so that M' - 2C is skew-symmetric.
    virtual Mat<N> coriolis(const Vec<N>& q, const Vec<N>& qd) const = 0;
    virtual Vec<N> gravity(const Vec<N>& q) const = 0;
    virtual InertiaBounds inertia_bounds() const = 0;
};

class OneDofModel final : public RobotModel<1> {
public:
    explicit OneDofModel(double mass) : mass_(mass) {
        if (!(mass > 0.0) || !std::isfinite(mass)) {
            throw std::invalid_argument("robot.mass must be positive");
        }
    }

    double mass() const { return mass_; }

    Mat<1> inertia(const Vec<1>&) const override { return Mat<1>::Constant(mass_); }
    Mat<1> coriolis(const Vec<1>&, const Vec<1>&) const override { return Mat<1>::Zero(); }
    Vec<1> gravity(const Vec<1>&) const override { return Vec<1>::Zero(); }
    InertiaBounds inertia_bounds() const override {
        const double eps = 1e-9 * mass_;
        return {mass_ - eps, mass_ + eps};
    }

private:
    double mass_;
};

inline OneDofModel one_dof_model(double mass) { return OneDofModel(mass); }

struct TwoLinkParams {
    double l1 = 1.0;
    double l2 = 1.0;
    double m1 = 1.0;
    double m2 = 1.0;
    bool gravity = true;
    double g = 9.81;
};

/// Planar revolute arm with uniform rods; q2 is measured relative to link 1.
class TwoLinkModel final : public RobotModel<2> {
public:
    explicit TwoLinkModel(const TwoLinkParams& p) : p_(p) {
        if (!(p.l1 > 0.0) || !(p.l2 > 0.0)) {
            throw std::invalid_argument("robot.link_lengths must be positive");
        }
        if (!(p.m1 > 0.0) || !(p.m2 > 0.0)) {
            throw std::invalid_argument("robot.link_masses must be positive");
        }
        lc1_ = 0.5 * p.l1;
        lc2_ = 0.5 * p.l2;
        i1_ = p.m1 * p.l1 * p.l1 / 12.0;
        i2_ = p.m2 * p.l2 * p.l2 / 12.0;
        bounds_ = scan_bounds();
    }

    const TwoLinkParams& params() const { return p_; }

    Mat<2> inertia(const Vec<2>& q) const override {
        const double c2 = std::cos(q(1));
        const double m22 = p_.m2 * lc2_ * lc2_ + i2_;
        const double m12 = m22 + p_.m2 * p_.l1 * lc2_ * c2;
        const double m11 = p_.m1 * lc1_ * lc1_ + i1_ + p_.m2 * (p_.l1 * p_.l1 + lc2_ * lc2_ + 2.0 * p_.l1 * lc2_ * c2) + i2_;
        Mat<2> m;
        m << m11, m12, m12, m22;
        return m;
    }

    Mat<2> coriolis(const Vec<2>& q, const Vec<2>& qd) const override {
        const double h = -p_.m2 * p_.l1 * lc2_ * std::sin(q(1));
        Mat<2> c;
        c << h * qd(1), h * (qd(0) + qd(1)), -h * qd(0), 0.0;
        return c;
    }

    Vec<2> gravity(const Vec<2>& q) const override {
        if (!p_.gravity) {
            return Vec<2>::Zero();
        }
        const double c1 = std::cos(q(0));
        const double c12 = std::cos(q(0) + q(1));
        Vec<2> g;
        g << (p_.m1 * lc1_ + p_.m2 * p_.l1) * p_.g * c1 + p_.m2 * lc2_ * p_.g * c12, p_.m2 * lc2_ * p_.g * c12;
        return g;
    }

    InertiaBounds inertia_bounds() const override { return bounds_; }

private:
    // M depends on q2 only; a dense scan over one revolution brackets its spectrum.
    InertiaBounds scan_bounds() const {
        constexpr int samples = 3601;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double q2 = -std::numbers::pi + 2.0 * std::numbers::pi * i / (samples - 1);
            const Eigen::SelfAdjointEigenSolver<Mat<2>> eig(inertia(Vec<2>(0.0, q2)));
            lo = std::min(lo, eig.eigenvalues().minCoeff());
            hi = std::max(hi, eig.eigenvalues().maxCoeff());
        }
        const double margin = 1e-9 * hi;
        return {lo - margin, hi + margin};
    }

    TwoLinkParams p_;
    double lc1_ = 0.0;
    double lc2_ = 0.0;
    double i1_ = 0.0;
    double i2_ = 0.0;
    InertiaBounds bounds_;
};

inline TwoLinkModel two_link_model(const TwoLinkParams& params) { return TwoLinkModel(params); }

/// Diagonal gains, stored as their diagonals.
template <int N>
struct Gains {
    Vec<N> b = Vec<N>::Constant(1.2);
    Vec<N> lambda = Vec<N>::Constant(1.0);
    Vec<N> K_m = Vec<N>::Constant(1.2);
    Vec<N> K_s = Vec<N>::Constant(1.2);
    Vec<N> K1 = Vec<N>::Constant(0.6);
    Vec<N> K2 = Vec<N>::Constant(0.6);

    /// K_m = K_s = b and K1 = K2 = lambda b / 2.
    static Gains matched(const Vec<N>& b, const Vec<N>& lambda) {
        Gains g;
        g.b = b;
        g.lambda = lambda;
        g.K_m = b;
        g.K_s = b;
        g.K1 = 0.5 * lambda.cwiseProduct(b);
        g.K2 = g.K1;
        return g;
    }
    static Gains matched(double b, double lambda) {
        return matched(Vec<N>::Constant(b), Vec<N>::Constant(lambda));
    }

    bool coordination_matched(double tol = 1e-12) const {
        return ((K_m - b).cwiseAbs().array() <= tol * b.array()).all() &&
               ((K_s - b).cwiseAbs().array() <= tol * b.array()).all();
    }

    bool error_weights_matched(double tol = 1e-12) const {
        const Vec<N> target = 0.5 * lambda.cwiseProduct(b);
        return ((K1 - target).cwiseAbs().array() <= tol * target.array()).all() &&
               ((K2 - target).cwiseAbs().array() <= tol * target.array()).all();
    }

    bool matched_mode() const { return coordination_matched() && error_weights_matched(); }

    void validate() const {
        auto positive = [](const Vec<N>& v, const char* key) {
            if (!(v.array() > 0.0).all() || !v.allFinite()) {
                throw std::invalid_argument(std::string("gains.") + key + " must be strictly positive");
            }
        };
        positive(b, "b");
        positive(lambda, "lambda");
        positive(K_m, "K_m");
        positive(K_s, "K_s");
        positive(K1, "K1");
        positive(K2, "K2");
    }
};

template <int N>
Vec<N> passive_output(const JointState<N>& s, const Vec<N>& lambda) {
    return s.qd + lambda.cwiseProduct(s.q);
}

/// tau = -M lambda q' - C lambda q + g + tau_bar
template <int N>
Vec<N> control_torque(const RobotModel<N>& model, const JointState<N>& s, const Vec<N>& lambda,
                      const Vec<N>& tau_bar) {
    const Mat<N> m = model.inertia(s.q);
    const Mat<N> c = model.coriolis(s.q, s.qd);
    return -m * lambda.cwiseProduct(s.qd) - c * lambda.cwiseProduct(s.q) + model.gravity(s.q) + tau_bar;
}

namespace detail {

template <int N>
Vec<N> solve_inertia(const Mat<N>& m, const Vec<N>& rhs) {
    const Eigen::LDLT<Mat<N>> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= std::numeric_limits<double>::epsilon() * ldlt.vectorD().cwiseAbs().maxCoeff()) {
        throw std::runtime_error("inertia matrix is numerically singular; the robot model is invalid");
    }
    return ldlt.solve(rhs);
}

}  // namespace detail

/// r' = M^{-1} (external + applied - C r)
template <int N>
Vec<N> reduced_accel(const RobotModel<N>& model, const JointState<N>& s, const Vec<N>& r,
                     const Vec<N>& external, const Vec<N>& applied) {
    const Mat<N> m = model.inertia(s.q);
    const Mat<N> c = model.coriolis(s.q, s.qd);
    return detail::solve_inertia<N>(m, Vec<N>(external + applied - c * r));
}

/// q'' of the unreduced dynamics under joint torque tau and joint-space external force.
template <int N>
Vec<N> full_accel(const RobotModel<N>& model, const JointState<N>& s, const Vec<N>& tau,
                  const Vec<N>& external) {
    const Mat<N> m = model.inertia(s.q);
    const Mat<N> c = model.coriolis(s.q, s.qd);
    return detail::solve_inertia<N>(m, Vec<N>(tau + external - c * s.qd - model.gravity(s.q)));
}

/// x^T (M' - 2C) x, with M' from a central difference of M along q' (step h seconds).
template <int N>
double skew_residual(const RobotModel<N>& model, const JointState<N>& s, const Vec<N>& x, double h = 1e-6) {
    const Mat<N> mdot = (model.inertia(s.q + h * s.qd) - model.inertia(s.q - h * s.qd)) / (2.0 * h);
    return x.dot((mdot - 2.0 * model.coriolis(s.q, s.qd)) * x);
}

template <int N>
double kinetic_energy(const RobotModel<N>& model, const JointState<N>& s) {
    return 0.5 * s.qd.dot(model.inertia(s.q) * s.qd);
}

}  // namespace telesim
