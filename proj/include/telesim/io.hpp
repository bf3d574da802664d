#pragma once

// CSV and JSON output. Doubles are written with 17 significant digits so they round-trip.

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "telesim/loss.hpp"
#include "telesim/sim.hpp"

namespace telesim {

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    if (ec != std::errc()) {
        return "nan";
    }
    return std::string(buf, ptr);
}

/// Appends "," + value to a CSV row.
class CsvRow {
public:
    explicit CsvRow(std::string& out) : out_(out) {}

    CsvRow& operator<<(double v) {
        sep();
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
        out_.append(buf, ec == std::errc() ? ptr : buf);
        return *this;
    }

    template <int N>
    CsvRow& operator<<(const Vec<N>& v) {
        for (int i = 0; i < N; ++i) {
            *this << v(i);
        }
        return *this;
    }

private:
    void sep() {
        if (!first_) {
            out_.push_back(',');
        }
        first_ = false;
    }

    std::string& out_;
    bool first_ = true;
};

template <int N>
std::string trace_header() {
    const char* per_joint[] = {"q_m", "q_s", "qd_m", "qd_s", "r_m", "r_s", "r_md", "r_sd",
                               "F_md", "F_sd", "u_m", "u_s", "v_s", "v_m"};
    std::string h = "t";
    auto add = [&](const std::string& name) {
        if constexpr (N == 1) {
            h += "," + name;
        } else {
            for (int i = 0; i < N; ++i) {
                h += "," + name + "_" + std::to_string(i);
            }
        }
    };
    for (const char* name : per_joint) {
        add(name);
    }
    h += ",L";
    add("e_m");
    add("e_s");
    h += ",V,V1,dV_fd,diss_forward,diss_backward";
    return h;
}

template <int N>
void append_trace_row(std::string& line, const TraceRecord<N>& r) {
    const CoordinationState<N>& c = r.channel;
    CsvRow row(line);
    row << r.t << r.master.q << r.slave.q << r.master.qd << r.slave.qd << c.r_m << c.r_s << c.r_md << c.r_sd
        << c.F_md << c.F_sd << c.waves.u_m << c.waves.u_s << c.waves.v_s << c.waves.v_m << r.L << r.errors.e_m
        << r.errors.e_s << r.V << r.V1 << r.dV_fd << r.ledger.diss_forward << r.ledger.diss_backward;
    line.push_back('\n');
}

/// Streams trace rows to `os`, buffering a few hundred kilobytes at a time.
template <int N>
class TraceWriter {
public:
    explicit TraceWriter(std::ostream& os) : os_(os) {
        buffer_ = trace_header<N>() + "\n";
    }
    ~TraceWriter() { flush(); }

    void operator()(const TraceRecord<N>& r) {
        append_trace_row<N>(buffer_, r);
        if (buffer_.size() > (1u << 18)) {
            flush();
        }
    }

    void flush() {
        os_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        buffer_.clear();
    }

private:
    std::ostream& os_;
    std::string buffer_;
};

/// JSON cannot hold NaN or infinity; those become null.
inline nlohmann::ordered_json json_number(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return nullptr;
}

inline nlohmann::ordered_json summary_json(const RunSummary& s) {
    nlohmann::ordered_json j;
    j["steps"] = s.steps;
    j["records"] = s.records;
    j["diverged"] = s.diverged;
    j["error"] = s.error;
    j["failed_step"] = s.failed_step;
    j["final_time"] = json_number(s.final_time);
    j["final_e_m"] = json_number(s.final_e_m);
    j["final_e_s"] = json_number(s.final_e_s);
    j["final_error"] = json_number(s.final_error);
    j["end_error"] = json_number(s.end_error);
    j["tail_error"] = json_number(s.tail_error);
    j["force_end"] = json_number(s.force_end);
    j["max_dV_after_force"] = json_number(s.max_dV_after_force);
    j["settle_tolerance"] = json_number(s.settle_tolerance);
    j["settled"] = s.settled;
    j["settling_time"] = json_number(s.settling_time);
    j["min_V"] = json_number(s.min_V);
    j["max_V_subtract_increase"] = json_number(s.max_V_subtract_increase);
    j["min_V1"] = json_number(s.min_V1);
    j["min_wave_dissipation"] = json_number(s.min_wave_dissipation);
    j["max_v1_form_gap"] = json_number(s.max_v1_form_gap);
    j["max_slave_constraint"] = json_number(s.max_slave_constraint);
    j["max_master_constraint"] = json_number(s.max_master_constraint);
    j["max_matched_reduction"] = json_number(s.max_matched_reduction);
    j["max_error_identity"] = json_number(s.max_error_identity);
    const BoundednessReport& b = s.report;
    j["boundedness"] = {
        {"max_q", json_number(b.max_q)},   {"max_qd", json_number(b.max_qd)},
        {"max_qdd", json_number(b.max_qdd)}, {"max_r", json_number(b.max_r)},
        {"max_e", json_number(b.max_e)},   {"max_ed", json_number(b.max_ed)},
        {"max_Vdd", json_number(b.max_Vdd)}, {"tail_mean_abs_dV", json_number(b.tail_mean_abs_dV)},
        {"vdot_converged", b.vdot_converged}, {"bounded", b.bounded()},
        {"flags", b.flags},
    };
    return j;
}

/// Loss-model samples over one period: t, L_ideal, L_series, d1, d2.
/// The series follows the profile's Fourier mode (corrected when the profile is the ideal pulse).
inline void write_loss_samples(std::ostream& os, const LossProfile& profile, std::size_t samples) {
    LossProfile series_profile = profile;
    if (series_profile.mode == LossMode::IdealPulse) {
        series_profile.mode = LossMode::FourierCorrected;
    }
    const LossSeries series(series_profile);
    std::string out = "t,L_ideal,L_series,d1,d2\n";
    for (std::size_t k = 0; k <= samples; ++k) {
        const double t = profile.period * static_cast<double>(k) / static_cast<double>(samples);
        CsvRow row(out);
        row << t << eval_ideal(t, profile) << series.value(t) << series.d1(t) << series.d2(t);
        out.push_back('\n');
    }
    os << out;
}

/// Coefficient table for n = 0..N. Row 0 carries the corrected series' DC term in a_n_corr;
/// l2_error is the RMS error of the corrected series kept to n harmonics.
inline void write_loss_coefficients(std::ostream& os, const LossProfile& profile) {
    LossProfile corrected = profile;
    corrected.mode = LossMode::FourierCorrected;
    std::string out = "n,a_n_paper,b_n_paper,a_n_corr,b_n_corr,l2_error\n";
    for (int n = 0; n <= profile.harmonics; ++n) {
        CsvRow row(out);
        row << static_cast<double>(n);
        if (n == 0) {
            const CorrectedCoefficients c = coefficients_corrected(0, profile);
            const double p = profile.rate();
            row << 0.0 << 0.0 << c.dc << 0.0 << std::sqrt(p * (1.0 - p));  // constant-only series
        } else {
            const FourierPair p = coefficients_paper(n, profile);
            const CorrectedCoefficients c = coefficients_corrected(n, profile);
            row << p.a << p.b << c.pair.a << c.pair.b << l2_truncation_error(corrected, n);
        }
        out.push_back('\n');
    }
    os << out;
}

}  // namespace telesim
