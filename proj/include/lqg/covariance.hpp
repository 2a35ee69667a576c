#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lqg/quadrature.hpp"

namespace lqg {

// Massive-free-field kernel family. dimension selects the ambient grid
// (1 = trace of the planar field on the real line, 2 = plane); the radial
// kernel itself is the same in both.
struct CovarianceSpec {
    int dimension = 2;   // 1 or 2
    double mass = 1.0;   // m > 0
    double eps = 0.0;    // cutoff; 0 means none

    void validate() const {
        if (dimension != 1 && dimension != 2)
            throw std::invalid_argument("CovarianceSpec: dimension must be 1 or 2");
        if (!(mass > 0.0) || !std::isfinite(mass))
            throw std::invalid_argument("CovarianceSpec: mass must be positive");
        if (!(eps >= 0.0) || !std::isfinite(eps))
            throw std::invalid_argument("CovarianceSpec: eps must be >= 0");
    }
};

namespace detail {

// int_{u0}^{u1} exp(-m^2 u / 2 - r^2 / (2u)) du / (2u), in log coordinates.
// u1 = +inf allowed. Both exponential factors cap the effective window.
inline double mff_band_integral(double r, double m, double u0, double u1) {
    const double mr = m * r;
    if (mr > 120.0) return 0.0;  // value below 1e-52, underflow territory
    const double b_decay = std::log(120.0 / (m * m));
    double a = (u0 > 0.0) ? std::log(u0) : -std::numeric_limits<double>::infinity();
    if (r > 0.0) a = std::max(a, 2.0 * std::log(r) - std::log(120.0));
    double b = b_decay;
    if (u1 != std::numeric_limits<double>::infinity()) b = std::min(b, std::log(u1));
    if (!(a < b)) return 0.0;
    const double m2 = m * m, r2 = r * r;
    auto f = [m2, r2](double v) {
        return 0.5 * std::exp(-0.5 * m2 * std::exp(v) - 0.5 * r2 * std::exp(-v));
    };
    return integrate(f, a, b, 1e-13);
}

}  // namespace detail

// G_m(r): covariance of the massive free field at separation r.
// Diverges like ln(1/r) at r = 0 (+infinity sentinel).
inline double covariance_mff(double r, double m) {
    if (!std::isfinite(r) || !(r >= 0.0))
        throw std::invalid_argument("covariance_mff: r must be finite and >= 0");
    if (!std::isfinite(m) || !(m > 0.0))
        throw std::invalid_argument("covariance_mff: m must be finite and > 0");
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    return detail::mff_band_integral(r, m, 0.0, std::numeric_limits<double>::infinity());
}

// K_eps(r): the u-integral truncated to u >= eps^2. Finite at r = 0,
// increases to G_m(r) as eps decreases.
inline double cutoff_covariance(double r, const CovarianceSpec& spec) {
    spec.validate();
    if (!std::isfinite(r) || !(r >= 0.0))
        throw std::invalid_argument("cutoff_covariance: r must be finite and >= 0");
    if (spec.eps <= 0.0)
        throw std::invalid_argument("cutoff_covariance: eps = 0; use covariance_mff");
    return detail::mff_band_integral(r, spec.mass, spec.eps * spec.eps,
                                     std::numeric_limits<double>::infinity());
}

// K_{eps_new} - K_{eps_old} for eps_new < eps_old: the (positive-definite)
// kernel of the independent increment used to refine a field to a finer cutoff.
inline double covariance_band(double r, double m, double eps_old, double eps_new) {
    if (!(eps_new > 0.0) || !(eps_new < eps_old))
        throw std::invalid_argument("covariance_band: need 0 < eps_new < eps_old");
    if (!std::isfinite(r) || !(r >= 0.0))
        throw std::invalid_argument("covariance_band: r must be finite and >= 0");
    return detail::mff_band_integral(r, m, eps_new * eps_new, eps_old * eps_old);
}

}  // namespace lqg
