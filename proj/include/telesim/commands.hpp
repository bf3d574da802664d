#pragma once

// The four CLI commands as plain functions returning the process exit status.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "telesim/config.hpp"
#include "telesim/io.hpp"
#include "telesim/sim.hpp"

namespace telesim {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInvariant = 2, kExitDivergence = 3 };

enum class CheckStatus { Pass, Fail, Skipped };

inline std::string_view to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "PASS";
        case CheckStatus::Fail: return "FAIL";
        case CheckStatus::Skipped: return "SKIPPED";
    }
    return "?";
}

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    std::string detail;
};

struct CheckTolerances {
    double constraint = 1e-10;      // coordination constraint residuals
    double identity = 1e-10;        // error / passive-output identity
    double skew = 1e-6;             // Property 2 with finite-difference M'
    double v_floor = -1e-9;         // V and V1 lower bound
    double dv_step = 1e-6;          // per-step V increase once F_h = 0
    double dissipation = -1e-12;    // per-step u^2 - u*^2 and v^2 - v*^2
    double v1_forms = 1e-9;         // two ways of accumulating V1
};

namespace detail {

/// Six significant digits, for messages meant for people.
inline std::string brief(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline CheckResult check_max(std::string name, double value, double limit, const std::string& what) {
    CheckResult r{std::move(name), CheckStatus::Pass, what + " = " + brief(value) + " (limit " + brief(limit) + ")"};
    if (!(value <= limit)) {
        r.status = CheckStatus::Fail;
    }
    return r;
}

inline CheckResult check_min(std::string name, double value, double floor, const std::string& what) {
    CheckResult r{std::move(name), CheckStatus::Pass, what + " = " + brief(value) + " (floor " + brief(floor) + ")"};
    if (!(value >= floor)) {
        r.status = CheckStatus::Fail;
    }
    return r;
}

inline CheckResult skipped(std::string name, std::string why) {
    return {std::move(name), CheckStatus::Skipped, std::move(why)};
}

/// Smallest inertia eigenvalue and largest skew residual over a grid of configurations.
template <int N>
std::pair<double, double> model_properties(const RobotModel<N>& model, int grid) {
    double min_eig = std::numeric_limits<double>::infinity();
    double max_skew = 0.0;
    for (int k = 0; k < grid; ++k) {
        const double a = -std::numbers::pi + 2.0 * std::numbers::pi * (k + 0.5) / grid;
        JointState<N> s;
        for (int i = 0; i < N; ++i) {
            s.q(i) = a * (i + 1) * 0.5;
            s.qd(i) = std::cos(3.0 * a + i);
        }
        const Eigen::SelfAdjointEigenSolver<Mat<N>> eig(model.inertia(s.q));
        min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
        Vec<N> x;
        for (int i = 0; i < N; ++i) {
            x(i) = std::sin(2.0 * a + 1.0 + i);
        }
        max_skew = std::max(max_skew, std::abs(skew_residual<N>(model, s, x)));
    }
    return {min_eig, max_skew};
}

}  // namespace detail

/// Invariants that can be judged from a finished run.
template <int N>
std::vector<CheckResult> run_checks(const ScenarioConfig& c, const RunSummary& s, const CheckTolerances& tol = {}) {
    std::vector<CheckResult> out;
    const Gains<N> g = make_gains<N>(c);

    out.push_back({"finite_state", s.diverged ? CheckStatus::Fail : CheckStatus::Pass,
                   s.diverged ? s.error : std::to_string(s.records) + " records"});
    {
        CheckResult b{"boundedness", CheckStatus::Pass, "max |q| = " + detail::brief(s.report.max_q)};
        if (!s.report.bounded()) {
            b.status = CheckStatus::Fail;
            b.detail = "exceeds bound:";
            for (const std::string& f : s.report.flags) {
                b.detail += " " + f;
            }
        }
        out.push_back(b);
    }

    if (!c.coupling) {
        out.push_back(detail::skipped("slave_constraint", "ports disconnected"));
        out.push_back(detail::skipped("master_constraint", "ports disconnected"));
        out.push_back(detail::skipped("matched_reduction", "ports disconnected"));
    } else {
        out.push_back(detail::check_max("slave_constraint", s.max_slave_constraint, tol.constraint, "max residual"));
        out.push_back(
            detail::check_max("master_constraint", s.max_master_constraint, tol.constraint, "max residual"));
        if (g.coordination_matched()) {
            out.push_back(
                detail::check_max("matched_reduction", s.max_matched_reduction, tol.constraint, "max residual"));
        } else {
            out.push_back(detail::skipped("matched_reduction",
                                          "K_m or K_s differs from b; general-gain constraints checked instead"));
        }
    }

    const bool series_error = c.error_mode == ErrorMode::Analysis &&
                              (is_fourier(c.loss.mode) || is_fourier(c.backward().mode));
    if (series_error) {
        out.push_back(detail::skipped("error_identity", "analysis-mode errors with a time-varying series L"));
    } else {
        out.push_back(detail::check_max("error_identity", s.max_error_identity, tol.identity, "max residual"));
    }

    const auto unbounded_series = [](LossMode m) {
        return m == LossMode::FourierPaper || m == LossMode::FourierCorrected;
    };
    if (unbounded_series(c.loss.mode) || unbounded_series(c.backward().mode)) {
        out.push_back(detail::skipped("wave_dissipation_pointwise",
                                      std::string("loss mode ") + std::string(to_string(c.loss.mode)) +
                                          " can leave [0, 1]"));
    } else {
        out.push_back(detail::check_min("wave_dissipation_pointwise", s.min_wave_dissipation, tol.dissipation,
                                        "min per-step dissipation"));
    }
    out.push_back(detail::check_min("wave_energy_V1", s.min_V1, tol.v_floor, "min V1"));
    out.push_back(detail::check_max("wave_energy_forms", s.max_v1_form_gap, tol.v1_forms, "max gap"));

    if (c.operator_term == OperatorTerm::Omit) {
        out.push_back(detail::check_min("lyapunov_nonnegative", s.min_V, tol.v_floor, "min V"));
    } else {
        out.push_back(detail::skipped("lyapunov_nonnegative", "operator supply subtracted: V <= 0 by construction"));
    }
    if (std::isfinite(s.force_end) && s.force_end < s.final_time) {
        out.push_back(detail::check_max("lyapunov_monotone_after_force", s.max_dV_after_force, tol.dv_step,
                                        "max per-step increase"));
    } else {
        out.push_back(detail::skipped("lyapunov_monotone_after_force", "operator force never switches off"));
    }
    return out;
}

template <int N>
std::vector<CheckResult> model_checks(const ScenarioConfig& c, const CheckTolerances& tol = {}) {
    std::vector<CheckResult> out;
    const auto master = make_model<N>(c.master);
    const auto slave = make_model<N>(c.slave);
    const auto [eig_m, skew_m] = detail::model_properties<N>(*master, 100);
    const auto [eig_s, skew_s] = detail::model_properties<N>(*slave, 100);
    out.push_back(detail::check_min("inertia_positive_definite", std::min(eig_m, eig_s), 0.0,
                                    "min eigenvalue over 100 configurations"));
    out.push_back(detail::check_max("inertia_skew_symmetry", std::max(skew_m, skew_s), tol.skew,
                                    "max |x^T (M' - 2C) x|"));
    return out;
}

inline bool all_passed(const std::vector<CheckResult>& checks) {
    return std::none_of(checks.begin(), checks.end(),
                        [](const CheckResult& r) { return r.status == CheckStatus::Fail; });
}

inline void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
    for (const CheckResult& r : checks) {
        os << to_string(r.status) << ' ' << r.name << ": " << r.detail << '\n';
    }
}

inline std::filesystem::path summary_path_for(const std::filesystem::path& trace) {
    std::filesystem::path p = trace;
    p.replace_extension(".summary.json");
    return p;
}

namespace detail {

/// Runs one scenario, writing the trace and its JSON summary.
inline RunSummary run_to_files(const ScenarioConfig& c, const std::filesystem::path& trace_path) {
    std::ofstream trace(trace_path, std::ios::binary);
    if (!trace) {
        throw std::runtime_error("cannot open output file '" + trace_path.string() + "'");
    }
    const RunSummary s = dispatch_dof(c, [&](auto dof) {
        constexpr int N = decltype(dof)::value;
        TraceWriter<N> writer(trace);
        RunSummary out = run<N>(c, std::ref(writer));
        writer.flush();
        return out;
    });
    trace.close();
    if (!trace) {
        throw std::runtime_error("failed writing '" + trace_path.string() + "'");
    }
    const std::filesystem::path summary_path = summary_path_for(trace_path);
    std::ofstream summary(summary_path, std::ios::binary);
    summary << summary_json(s).dump(2) << '\n';
    if (!summary) {
        throw std::runtime_error("failed writing '" + summary_path.string() + "'");
    }
    return s;
}

inline void print_summary(std::ostream& os, const RunSummary& s) {
    os << "steps = " << s.steps << '\n'
       << "final_error = " << format_double(s.final_error) << '\n'
       << "end_error = " << format_double(s.end_error) << '\n'
       << "final_e_m = " << format_double(s.final_e_m) << '\n'
       << "final_e_s = " << format_double(s.final_e_s) << '\n'
       << "max_dV_after_force = " << format_double(s.max_dV_after_force) << '\n'
       << "settled = " << (s.settled ? "true" : "false") << '\n'
       << "settling_time = " << format_double(s.settling_time) << '\n'
       << "min_V = " << format_double(s.min_V) << '\n'
       << "bounded = " << (s.report.bounded() ? "true" : "false") << '\n';
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace detail

/// Exit 0 on a bounded run, 3 on divergence, 2 when the run is unbounded or (with `strict`)
/// any invariant check fails.
inline int cmd_run(const std::string& config_path, const std::string& out_path, bool strict, std::ostream& out,
                   std::ostream& err) {
    return detail::guarded(err, [&] {
        const ScenarioConfig c = load_config(config_path);
        const RunSummary s = detail::run_to_files(c, out_path);
        detail::print_summary(out, s);
        out << "summary: " << summary_path_for(out_path).string() << '\n';
        if (s.diverged) {
            err << "error: diverged at step " << s.failed_step << ": " << s.error << '\n';
            return static_cast<int>(kExitDivergence);
        }
        if (!s.report.bounded()) {
            err << "error: invariant violated: boundedness\n";
            return static_cast<int>(kExitInvariant);
        }
        if (strict) {
            const std::vector<CheckResult> checks =
                dispatch_dof(c, [&](auto dof) { return run_checks<decltype(dof)::value>(c, s); });
            print_checks(out, checks);
            for (const CheckResult& r : checks) {
                if (r.status == CheckStatus::Fail) {
                    err << "error: invariant violated: " << r.name << " (" << r.detail << ")\n";
                }
            }
            if (!all_passed(checks)) {
                return static_cast<int>(kExitInvariant);
            }
        }
        return static_cast<int>(kExitOk);
    });
}

/// Full invariant suite on a run truncated to at most 10 s.
inline int cmd_check(const std::string& config_path, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        ScenarioConfig c = load_config(config_path);
        c.duration = std::min(c.duration, 10.0);
        const std::vector<CheckResult> checks = dispatch_dof(c, [&](auto dof) {
            constexpr int N = decltype(dof)::value;
            std::vector<CheckResult> all = model_checks<N>(c);
            const RunSummary s = run<N>(c);
            const std::vector<CheckResult> more = run_checks<N>(c, s);
            all.insert(all.end(), more.begin(), more.end());
            return all;
        });
        print_checks(out, checks);
        const bool ok = all_passed(checks);
        out << (ok ? "all invariants passed" : "invariant check failed") << '\n';
        return static_cast<int>(ok ? kExitOk : kExitInvariant);
    });
}

/// Parses "r1,r2,..." into distinct loss rates, keeping first occurrences in order.
inline std::vector<double> parse_rates(std::string_view text, std::ostream& err) {
    if (ini::trim(text).empty()) {
        throw ConfigError("--rates", "empty rate list");
    }
    std::vector<double> rates;
    while (true) {
        const auto comma = text.find(',');
        const std::string_view item = ini::trim(text.substr(0, comma));
        if (item.empty()) {
            throw ConfigError("--rates", "empty entry in rate list");
        }
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("--rates", "not a number: '" + std::string(item) + "'");
        }
        if (!(v >= 0.0 && v < 1.0)) {
            throw ConfigError("--rates", "loss rate must satisfy 0 <= rate < 1, got " + std::string(item));
        }
        if (std::find(rates.begin(), rates.end(), v) != rates.end()) {
            err << "warning: duplicate loss rate " << item << " ignored\n";
        } else {
            rates.push_back(v);
        }
        if (comma == std::string_view::npos) {
            break;
        }
        text.remove_prefix(comma + 1);
        if (text.empty()) {
            throw ConfigError("--rates", "trailing comma in rate list");
        }
    }
    return rates;
}

/// Worker count from TELESIM_THREADS, else the hardware concurrency.
inline unsigned sweep_threads(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TELESIM_THREADS"); env != nullptr && *env != '\0') {
        unsigned v = 0;
        const std::string_view s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
            throw ConfigError("TELESIM_THREADS", "must be a positive integer, got '" + std::string(s) + "'");
        }
        n = v;
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Shortest round-trip spelling, so 0.05 names `rate_0.05.csv`.
inline std::string rate_label(double rate) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, rate);
    return "rate_" + std::string(buf, ec == std::errc() ? ptr : buf);
}

/// One trace and summary per loss rate plus `sweep.csv` (loss_rate, final_error, max_V_increase, settled, status).
/// A failing member run does not stop the others; the exit status reports the worst outcome.
inline int cmd_sweep(const std::string& config_path, const std::string& rates_text, const std::string& out_dir,
                     std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const std::vector<double> rates = parse_rates(rates_text, err);
        const ScenarioConfig base = load_config(config_path);
        std::vector<ScenarioConfig> configs;
        for (double rate : rates) {
            ScenarioConfig c = base;
            c.loss.alpha = rate * c.loss.period;
            if (c.backward_loss) {
                c.backward_loss->alpha = rate * c.backward_loss->period;
            }
            c.validate();
            configs.push_back(c);
        }
        std::filesystem::create_directories(out_dir);
        const unsigned workers = sweep_threads(configs.size());

        struct Outcome {
            RunSummary summary;
            std::string failure;  // exception text when the run could not complete
        };
        std::vector<Outcome> outcomes(configs.size());
        std::atomic<std::size_t> next{0};
        std::mutex log_mutex;
        auto worker = [&] {
            for (std::size_t i = next++; i < configs.size(); i = next++) {
                const std::filesystem::path path =
                    std::filesystem::path(out_dir) / (rate_label(rates[i]) + ".csv");
                try {
                    outcomes[i].summary = detail::run_to_files(configs[i], path);
                } catch (const std::exception& e) {
                    outcomes[i].failure = e.what();
                }
                const std::lock_guard<std::mutex> lock(log_mutex);
                out << "rate " << format_double(rates[i]) << ": " << path.string() << '\n';
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 1; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        worker();
        for (std::thread& t : pool) {
            t.join();
        }

        int code = kExitOk;
        std::string table = "loss_rate,final_error,max_V_increase,settled,status\n";
        for (std::size_t i = 0; i < rates.size(); ++i) {
            const Outcome& o = outcomes[i];
            std::string status = "ok";
            if (!o.failure.empty()) {
                status = "error";
                err << "error: rate " << format_double(rates[i]) << ": " << o.failure << '\n';
                code = std::max<int>(code, kExitUsage);
            } else if (o.summary.diverged) {
                status = "diverged";
                err << "error: rate " << format_double(rates[i]) << " diverged: " << o.summary.error << '\n';
                code = std::max<int>(code, kExitDivergence);
            } else if (!o.summary.report.bounded()) {
                status = "unbounded";
                code = std::max<int>(code, kExitInvariant);
            }
            CsvRow row(table);
            row << rates[i] << o.summary.final_error << o.summary.max_dV_after_force;
            table += std::string(",") + (o.summary.settled ? "true" : "false") + "," + status + "\n";
        }
        const std::filesystem::path table_path = std::filesystem::path(out_dir) / "sweep.csv";
        std::ofstream f(table_path, std::ios::binary);
        f << table;
        if (!f) {
            throw std::runtime_error("failed writing '" + table_path.string() + "'");
        }
        out << "summary table: " << table_path.string() << '\n';
        return code;
    });
}

/// Samples over one period to `out_path`, coefficient table to `<stem>.coefficients.csv`.
inline int cmd_loss(double alpha, double period, int harmonics, const std::string& out_path, std::ostream& out,
                    std::ostream& err) {
    return detail::guarded(err, [&] {
        ScenarioConfig probe;
        probe.loss.alpha = alpha;
        probe.loss.period = period;
        probe.loss.harmonics = harmonics;
        probe.validate();
        const LossProfile& profile = probe.loss;

        std::ofstream samples(out_path, std::ios::binary);
        if (!samples) {
            throw std::runtime_error("cannot open output file '" + out_path + "'");
        }
        write_loss_samples(samples, profile, 1000);
        std::filesystem::path coeff_path = out_path;
        coeff_path.replace_extension(".coefficients.csv");
        std::ofstream coeffs(coeff_path, std::ios::binary);
        write_loss_coefficients(coeffs, profile);
        if (!samples || !coeffs) {
            throw std::runtime_error("failed writing loss tables");
        }
        out << "samples: " << out_path << '\n' << "coefficients: " << coeff_path.string() << '\n';
        return static_cast<int>(kExitOk);
    });
}

}  // namespace telesim
