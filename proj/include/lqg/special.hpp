#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lqg {

inline constexpr double kEulerGamma = 0.57721566490153286060651209;

// Exponential integral E1(x) = int_x^inf e^{-t}/t dt, x > 0.
// Power series below 1, modified-Lentz continued fraction above.
inline double expint_e1(double x) {
    if (!(x > 0.0)) {
        if (x == 0.0) return std::numeric_limits<double>::infinity();
        throw std::domain_error("expint_e1: requires x >= 0");
    }
    if (x < 1.0) {
        // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
        double sum = 0.0, term = 1.0;
        for (int k = 1; k <= 40; ++k) {
            term *= -x / k;
            double add = -term / k;
            sum += add;
            if (std::fabs(add) < 1e-18 * (std::fabs(sum) + 1.0)) break;
        }
        return -kEulerGamma - std::log(x) + sum;
    }
    // E1(x) = e^{-x} * 1/(x+1- 1^2/(x+3- 2^2/(x+5- ...)))  (Lentz)
    const double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 200; ++i) {
        double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = a * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + a / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x);
}

}  // namespace lqg
