#pragma once

// INI-style scenario files: `[section]` headers, `key = value` lines, `#` or `;` comments.
// Lists are comma separated. Unknown sections or keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "telesim/errors.hpp"
#include "telesim/scenario.hpp"

namespace telesim {

namespace ini {

struct Entry {
    std::string value;
    int line = 0;
};

// "section.key" -> entry
using Document = std::map<std::string, Entry>;

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline Document parse(std::istream& in) {
    Document doc;
    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view s = raw;
        if (line == 1 && s.starts_with("\xEF\xBB\xBF")) {
            s.remove_prefix(3);
        }
        if (const auto hash = s.find_first_of("#;"); hash != std::string_view::npos) {
            s = s.substr(0, hash);
        }
        s = trim(s);
        if (s.empty()) {
            continue;
        }
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) {
                throw ConfigError("line " + std::to_string(line), "malformed section header");
            }
            section = std::string(trim(s.substr(1, s.size() - 2)));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line), "expected 'key = value'");
        }
        const std::string key(trim(s.substr(0, eq)));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line), "missing key before '='");
        }
        if (section.empty()) {
            throw ConfigError("line " + std::to_string(line), "key '" + key + "' appears before any [section]");
        }
        const std::string full = section + "." + key;
        if (const auto it = doc.find(full); it != doc.end()) {
            throw ConfigError(full, "line " + std::to_string(line) + ": duplicate key (first set on line " +
                                        std::to_string(it->second.line) + ")");
        }
        doc[full] = Entry{std::string(trim(s.substr(eq + 1))), line};
    }
    return doc;
}

}  // namespace ini

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(ini::Document doc) : doc_(std::move(doc)) {}

    bool has(const std::string& key) const { return doc_.count(key) != 0; }

    int line_of(const std::string& key) const {
        const auto it = doc_.find(key);
        return it == doc_.end() ? 0 : it->second.line;
    }

    void number(const std::string& key, double& out) {
        if (const Entry* e = take(key)) {
            out = parse_number(key, *e, e->value);
        }
    }

    void integer(const std::string& key, int& out) {
        if (const Entry* e = take(key)) {
            out = static_cast<int>(parse_integer<long long>(key, *e));
        }
    }

    void unsigned_integer(const std::string& key, std::uint64_t& out) {
        if (const Entry* e = take(key)) {
            out = parse_integer<std::uint64_t>(key, *e);
        }
    }

    void size(const std::string& key, std::size_t& out) {
        if (const Entry* e = take(key)) {
            out = static_cast<std::size_t>(parse_integer<std::uint64_t>(key, *e));
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const Entry* e = take(key)) {
            const std::string& v = e->value;
            if (v == "true" || v == "yes" || v == "on" || v == "1") {
                out = true;
            } else if (v == "false" || v == "no" || v == "off" || v == "0") {
                out = false;
            } else {
                throw error(key, *e, "expected true/false, got '" + v + "'");
            }
        }
    }

    void list(const std::string& key, std::vector<double>& out) {
        if (const Entry* e = take(key)) {
            out.clear();
            std::string_view rest = e->value;
            while (true) {
                const auto comma = rest.find(',');
                out.push_back(parse_number(key, *e, ini::trim(rest.substr(0, comma))));
                if (comma == std::string_view::npos) {
                    break;
                }
                rest.remove_prefix(comma + 1);
            }
        }
    }

    template <typename Enum>
    void choice(const std::string& key, Enum& out, const std::vector<std::pair<std::string, Enum>>& options) {
        if (const Entry* e = take(key)) {
            for (const auto& [name, value] : options) {
                if (e->value == name) {
                    out = value;
                    return;
                }
            }
            std::string allowed;
            for (const auto& [name, value] : options) {
                allowed += (allowed.empty() ? "" : ", ") + name;
            }
            throw error(key, *e, "unknown value '" + e->value + "' (expected one of: " + allowed + ")");
        }
    }

    /// Throws for the first key nobody asked for.
    void reject_unknown() const {
        const Entry* first = nullptr;
        std::string first_key;
        for (const auto& [key, entry] : doc_) {
            if (!used_.count(key) && (first == nullptr || entry.line < first->line)) {
                first = &entry;
                first_key = key;
            }
        }
        if (first != nullptr) {
            throw ConfigError(first_key, "line " + std::to_string(first->line) + ": unknown key");
        }
    }

private:
    using Entry = ini::Entry;

    const Entry* take(const std::string& key) {
        const auto it = doc_.find(key);
        if (it == doc_.end()) {
            return nullptr;
        }
        used_[key] = true;
        return &it->second;
    }

    static ConfigError error(const std::string& key, const Entry& e, const std::string& what) {
        return ConfigError(key, "line " + std::to_string(e.line) + ": " + what);
    }

    static double parse_number(const std::string& key, const Entry& e, std::string_view text) {
        double v = 0.0;
        const char* begin = text.data();
        const char* end = text.data() + text.size();
        if (!text.empty() && *begin == '+') {
            ++begin;
        }
        const auto [ptr, ec] = std::from_chars(begin, end, v);
        if (text.empty() || ec != std::errc() || ptr != end) {
            throw error(key, e, "expected a number, got '" + std::string(text) + "'");
        }
        return v;
    }

    template <typename Int>
    static Int parse_integer(const std::string& key, const Entry& e) {
        Int v{};
        const std::string& text = e.value;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
            throw error(key, e, "expected an integer, got '" + text + "'");
        }
        return v;
    }

    ini::Document doc_;
    std::map<std::string, bool> used_;
};

}  // namespace detail

/// Parses and validates; a returned config always satisfies ScenarioConfig::validate().
inline ScenarioConfig parse_config(std::istream& in) {
    detail::ConfigReader r(ini::parse(in));
    ScenarioConfig c;

    RobotKind kind = RobotKind::OneDof;
    r.choice<RobotKind>("robot.model", kind, {{"one_dof", RobotKind::OneDof}, {"two_link", RobotKind::TwoLink}});
    c.master.kind = c.slave.kind = kind;
    double mass = 1.0;
    r.number("robot.mass", mass);
    c.master.mass = c.slave.mass = mass;
    r.number("robot.master_mass", c.master.mass);
    r.number("robot.slave_mass", c.slave.mass);
    std::vector<double> lengths{1.0, 1.0};
    std::vector<double> link_masses{1.0, 1.0};
    r.list("robot.link_lengths", lengths);
    r.list("robot.link_masses", link_masses);
    if (lengths.size() != 2) {
        throw ConfigError("robot.link_lengths", "line " + std::to_string(r.line_of("robot.link_lengths")) +
                                                    ": expected 2 values");
    }
    if (link_masses.size() != 2) {
        throw ConfigError("robot.link_masses", "line " + std::to_string(r.line_of("robot.link_masses")) +
                                                   ": expected 2 values");
    }
    TwoLinkParams link;
    link.l1 = lengths[0];
    link.l2 = lengths[1];
    link.m1 = link_masses[0];
    link.m2 = link_masses[1];
    r.boolean("robot.gravity", link.gravity);
    r.number("robot.g", link.g);
    c.master.link = c.slave.link = link;

    r.list("gains.b", c.b);
    r.list("gains.lambda", c.lambda);
    r.choice<bool>("gains.mode", c.matched_gains, {{"matched", true}, {"custom", false}});
    r.list("gains.K_m", c.K_m);
    r.list("gains.K_s", c.K_s);
    r.list("gains.K1", c.K1);
    r.list("gains.K2", c.K2);
    if (c.matched_gains) {
        for (const char* k : {"gains.K_m", "gains.K_s", "gains.K1", "gains.K2"}) {
            if (r.has(k)) {
                throw ConfigError(k, "line " + std::to_string(r.line_of(k)) + ": set gains.mode = custom to override");
            }
        }
    }

    const std::vector<std::pair<std::string, LossMode>> modes = {{"ideal", LossMode::IdealPulse},
                                                                 {"fourier_paper", LossMode::FourierPaper},
                                                                 {"fourier_corrected", LossMode::FourierCorrected},
                                                                 {"fourier_clamped", LossMode::FourierClamped}};
    r.choice<LossMode>("loss.mode", c.loss.mode, modes);
    r.number("loss.period", c.loss.period);
    r.number("loss.alpha", c.loss.alpha);
    if (r.has("loss.rate")) {
        if (r.has("loss.alpha")) {
            throw ConfigError("loss.rate", "line " + std::to_string(r.line_of("loss.rate")) +
                                               ": give either loss.alpha or loss.rate, not both");
        }
        double rate = 0.0;
        r.number("loss.rate", rate);
        c.loss.alpha = rate * c.loss.period;
    }
    r.integer("loss.harmonics", c.loss.harmonics);
    r.number("loss.phase", c.loss.phase);
    if (r.has("loss.backward_alpha") || r.has("loss.backward_phase")) {
        LossProfile back = c.loss;
        r.number("loss.backward_alpha", back.alpha);
        r.number("loss.backward_phase", back.phase);
        c.backward_loss = back;
    }

    r.choice<OperatorKind>("operator.profile", c.op.kind,
                           {{"zero", OperatorKind::Zero},
                            {"pulse", OperatorKind::Pulse},
                            {"sine", OperatorKind::Sine},
                            {"random", OperatorKind::Random}});
    r.number("operator.amplitude", c.op.amplitude);
    r.number("operator.start", c.op.start);
    r.number("operator.width", c.op.width);
    r.number("operator.frequency", c.op.frequency);
    r.number("operator.hold", c.op.hold);

    r.boolean("environment.enabled", c.env.enabled);
    r.number("environment.stiffness", c.env.stiffness);
    r.number("environment.damping", c.env.damping);
    r.number("environment.mass", c.env.mass);

    r.number("sim.dt", c.dt);
    r.number("sim.duration", c.duration);
    r.list("sim.q_m0", c.q_m0);
    r.list("sim.q_s0", c.q_s0);
    r.list("sim.qd_m0", c.qd_m0);
    r.list("sim.qd_s0", c.qd_s0);
    r.choice<ErrorMode>("sim.error_mode", c.error_mode,
                        {{"simulation", ErrorMode::Simulation}, {"analysis", ErrorMode::Analysis}});
    r.unsigned_integer("sim.seed", c.seed);
    r.integer("sim.transport_delay", c.transport_delay);
    r.boolean("sim.coupling", c.coupling);
    r.choice<OperatorTerm>("sim.operator_term", c.operator_term,
                           {{"omit", OperatorTerm::Omit}, {"subtract", OperatorTerm::Subtract}});
    r.size("sim.trace_every", c.trace_every);
    r.number("sim.settle_fraction", c.settle_fraction);
    r.number("sim.settle_hold", c.settle_hold);
    r.number("sim.settle_tolerance", c.settle_tolerance);
    r.number("sim.bound", c.limits.bound);
    r.number("sim.vdot_tail_threshold", c.limits.vdot_tail_threshold);
    r.number("sim.tail_fraction", c.limits.tail_fraction);

    r.reject_unknown();
    try {
        c.validate();
        if (!(c.limits.tail_fraction > 0.0 && c.limits.tail_fraction <= 1.0)) {
            throw ConfigError("sim.tail_fraction", "must lie in (0, 1]");
        }
        if (!(c.limits.bound > 0.0)) {
            throw ConfigError("sim.bound", "must be positive");
        }
    } catch (const ConfigError& e) {
        // Point at the line the value came from when the file set it.
        const std::string& key = e.key();
        const std::string what = std::string(e.what()).substr(key.size() + 2);
        const int line = r.line_of(key);
        throw ConfigError(key, line > 0 ? "line " + std::to_string(line) + ": " + what : what);
    }
    return c;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file '" + path + "'");
    }
    return parse_config(in);
}

}  // namespace telesim
