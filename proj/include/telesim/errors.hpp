#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace telesim {

/// Invalid configuration value; `key()` names the offending `section.key`.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& message)
        : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}

    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Non-finite state during integration.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, double t)
        : std::runtime_error("non-finite state at step " + std::to_string(step) + " (t = " + std::to_string(t) + " s)"),
          step_(step),
          t_(t) {}

    std::size_t step() const { return step_; }
    double time() const { return t_; }

private:
    std::size_t step_;
    double t_;
};

}  // namespace telesim
