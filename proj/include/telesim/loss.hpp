#pragma once

// Periodic data-loss model: an ideal 0/1 pulse train and its truncated Fourier series.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "telesim/quadrature.hpp"

namespace telesim {

enum class LossMode { IdealPulse, FourierPaper, FourierCorrected, FourierClamped };

inline std::string_view to_string(LossMode mode) {
    switch (mode) {
        case LossMode::IdealPulse: return "ideal";
        case LossMode::FourierPaper: return "fourier_paper";
        case LossMode::FourierCorrected: return "fourier_corrected";
        case LossMode::FourierClamped: return "fourier_clamped";
    }
    return "unknown";
}

inline bool is_fourier(LossMode mode) { return mode != LossMode::IdealPulse; }

/// Loss window [phase, phase + alpha) repeats with period T. Inside it the link delivers nothing.
struct LossProfile {
    double period = 10.0;        // T, seconds
    double alpha = 0.0;          // loss width, seconds
    int harmonics = 64;          // N
    LossMode mode = LossMode::IdealPulse;
    double phase = 0.0;          // start of the loss window within the period, seconds

    double omega() const { return 2.0 * std::numbers::pi / period; }
    double rate() const { return alpha / period; }

    void validate() const {
        if (!(period > 0.0) || !std::isfinite(period)) {
            throw std::invalid_argument("loss.period must be positive and finite");
        }
        if (!(alpha >= 0.0) || !(alpha < period)) {
            throw std::invalid_argument("loss.alpha must satisfy 0 <= alpha < period");
        }
        if (harmonics < 1) {
            throw std::invalid_argument("loss.harmonics must be >= 1");
        }
        if (!std::isfinite(phase)) {
            throw std::invalid_argument("loss.phase must be finite");
        }
    }
};

struct FourierPair {
    double a = 0.0;
    double b = 0.0;
    int n = 0;
};

struct CorrectedCoefficients {
    FourierPair pair;
    double dc = 1.0;
};

/// Coefficients exactly as printed for the pulse train, without a DC term.
inline FourierPair coefficients_paper(int n, const LossProfile& profile) {
    if (n < 1) {
        throw std::invalid_argument("coefficients_paper: harmonic index must be >= 1");
    }
    const double pin = std::numbers::pi * n;
    const double theta = 2.0 * std::numbers::pi * n * profile.alpha / profile.period;
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return {-std::sin(theta) / pin, (std::cos(theta) - sign) / pin, n};
}

/// Coefficients of the 0-on-[0, alpha), 1-elsewhere pulse, from the defining integrals.
/// n = 0 yields only the DC term.
inline CorrectedCoefficients coefficients_corrected(int n, const LossProfile& profile) {
    if (n < 0) {
        throw std::invalid_argument("coefficients_corrected: harmonic index must be >= 0");
    }
    CorrectedCoefficients out;
    out.dc = 1.0 - profile.alpha / profile.period;
    out.pair.n = n;
    if (n == 0) {
        return out;
    }
    const double pin = std::numbers::pi * n;
    const double theta = 2.0 * std::numbers::pi * n * profile.alpha / profile.period;
    out.pair.a = -std::sin(theta) / pin;
    out.pair.b = (std::cos(theta) - 1.0) / pin;
    return out;
}

/// Time since the most recent window start, in [0, T).
inline double phase_in_period(double t, const LossProfile& profile) {
    double tau = std::fmod(t - profile.phase, profile.period);
    if (tau < 0.0) {
        tau += profile.period;
    }
    if (tau >= profile.period) {
        tau = 0.0;
    }
    return tau;
}

inline double eval_ideal(double t, const LossProfile& profile) {
    return phase_in_period(t, profile) < profile.alpha ? 0.0 : 1.0;
}

/// Truncated series with cached coefficients. Evaluation is a pure function of t.
class LossSeries {
public:
    explicit LossSeries(const LossProfile& profile) : profile_(profile) {
        profile_.validate();
        const LossMode coeff_mode =
            profile_.mode == LossMode::FourierPaper ? LossMode::FourierPaper : LossMode::FourierCorrected;
        a_.resize(static_cast<std::size_t>(profile_.harmonics));
        b_.resize(static_cast<std::size_t>(profile_.harmonics));
        for (int n = 1; n <= profile_.harmonics; ++n) {
            FourierPair p = coeff_mode == LossMode::FourierPaper ? coefficients_paper(n, profile_)
                                                                 : coefficients_corrected(n, profile_).pair;
            a_[static_cast<std::size_t>(n - 1)] = p.a;
            b_[static_cast<std::size_t>(n - 1)] = p.b;
        }
        dc_ = coeff_mode == LossMode::FourierPaper ? 0.0 : coefficients_corrected(0, profile_).dc;
    }

    const LossProfile& profile() const { return profile_; }

    /// Raw series value, before any clamping.
    double raw(double t) const {
        const double theta = profile_.omega() * phase_in_period(t, profile_);
        double sum = dc_;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            const double arg = static_cast<double>(k + 1) * theta;
            sum += a_[k] * std::cos(arg) + b_[k] * std::sin(arg);
        }
        return sum;
    }

    double value(double t) const {
        const double v = raw(t);
        return profile_.mode == LossMode::FourierClamped ? std::clamp(v, 0.0, 1.0) : v;
    }

    // Derivatives are term-by-term on the unclamped series.
    double d1(double t) const {
        const double w = profile_.omega();
        const double theta = w * phase_in_period(t, profile_);
        double sum = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            const double nw = static_cast<double>(k + 1) * w;
            const double arg = static_cast<double>(k + 1) * theta;
            sum += nw * (b_[k] * std::cos(arg) - a_[k] * std::sin(arg));
        }
        return sum;
    }

    double d2(double t) const {
        const double w = profile_.omega();
        const double theta = w * phase_in_period(t, profile_);
        double sum = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            const double nw = static_cast<double>(k + 1) * w;
            const double arg = static_cast<double>(k + 1) * theta;
            sum -= nw * nw * (a_[k] * std::cos(arg) + b_[k] * std::sin(arg));
        }
        return sum;
    }

    /// Upper bounds on |d1| and |d2| from the coefficient magnitudes.
    double d1_bound() const {
        double s = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            s += static_cast<double>(k + 1) * profile_.omega() * (std::abs(a_[k]) + std::abs(b_[k]));
        }
        return s;
    }

    double d2_bound() const {
        double s = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            const double nw = static_cast<double>(k + 1) * profile_.omega();
            s += nw * nw * (std::abs(a_[k]) + std::abs(b_[k]));
        }
        return s;
    }

private:
    LossProfile profile_;
    std::vector<double> a_;
    std::vector<double> b_;
    double dc_ = 0.0;
};

inline void require_fourier(const LossProfile& profile, const char* what) {
    if (!is_fourier(profile.mode)) {
        throw std::invalid_argument(std::string(what) + ": requires a Fourier loss mode");
    }
}

inline double eval_series(double t, const LossProfile& profile) {
    require_fourier(profile, "eval_series");
    return LossSeries(profile).value(t);
}

inline double eval_series_d1(double t, const LossProfile& profile) {
    require_fourier(profile, "eval_series_d1");
    return LossSeries(profile).d1(t);
}

inline double eval_series_d2(double t, const LossProfile& profile) {
    require_fourier(profile, "eval_series_d2");
    return LossSeries(profile).d2(t);
}

/// L(t) in whatever mode the profile selects.
class LossSignal {
public:
    explicit LossSignal(const LossProfile& profile) : profile_(profile), series_(profile) {}

    double operator()(double t) const {
        return profile_.mode == LossMode::IdealPulse ? eval_ideal(t, profile_) : series_.value(t);
    }
    double d1(double t) const { return profile_.mode == LossMode::IdealPulse ? 0.0 : series_.d1(t); }
    double d2(double t) const { return profile_.mode == LossMode::IdealPulse ? 0.0 : series_.d2(t); }

    const LossProfile& profile() const { return profile_; }

private:
    LossProfile profile_;
    LossSeries series_;
};

inline constexpr std::size_t kQuadraturePanels = std::size_t{1} << 14;

/// RMS difference between the ideal pulse and the N-term series over one period.
/// The period is split at the window edges so each Simpson piece sees a smooth integrand.
inline double l2_truncation_error(const LossProfile& profile, int harmonics) {
    if (harmonics < 1) {
        throw std::invalid_argument("l2_truncation_error: N must be >= 1");
    }
    require_fourier(profile, "l2_truncation_error");
    LossProfile p = profile;
    p.harmonics = harmonics;
    const LossSeries series(p);
    const double t0 = p.phase;
    const double T = p.period;
    const double edge = t0 + p.alpha;

    auto panels_for = [&](double len) {
        auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(kQuadraturePanels) * len / T));
        n = std::max<std::size_t>(n, 2);
        return n + (n % 2);
    };
    const double in_window =
        simpson([&](double t) { return series.value(t) * series.value(t); }, t0, edge, panels_for(p.alpha));
    const double outside = simpson(
        [&](double t) {
            const double d = 1.0 - series.value(t);
            return d * d;
        },
        edge, t0 + T, panels_for(T - p.alpha));
    return std::sqrt(std::max(0.0, (in_window + outside) / T));
}

}  // namespace telesim
