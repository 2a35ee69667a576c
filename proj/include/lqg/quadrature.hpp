#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace lqg {

// Adaptive Gauss-Kronrod on a finite interval.
template <typename F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12) {
    if (a >= b) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        std::forward<F>(f), a, b, 14, rel_tol);
}

}  // namespace lqg
