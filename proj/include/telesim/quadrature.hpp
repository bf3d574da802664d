#pragma once

#include <cstddef>
#include <stdexcept>

namespace telesim {

/// Composite Simpson rule on [a, b]. `panels` is rounded up to the next even number.
template <typename F>
double simpson(F&& f, double a, double b, std::size_t panels) {
    if (panels == 0) {
        throw std::invalid_argument("simpson: panels must be positive");
    }
    if (panels % 2 != 0) {
        ++panels;
    }
    if (a == b) {
        return 0.0;
    }
    const double h = (b - a) / static_cast<double>(panels);
    double odd = 0.0;
    double even = 0.0;
    for (std::size_t i = 1; i < panels; ++i) {
        const double x = a + h * static_cast<double>(i);
        if (i % 2 == 1) {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    return h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b));
}

}  // namespace telesim
