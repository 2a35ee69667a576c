#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lqg {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_stderr = 0.0;
};

// Ordinary least squares y = a + b x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need >= 2 points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        sse += r * r;
    }
    fit.r2 = (syy > 0) ? 1.0 - sse / syy : 1.0;
    if (n > 2) fit.slope_stderr = std::sqrt(sse / (n - 2) / sxx);
    return fit;
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
    MeanStderr m;
    m.n = v.size();
    if (m.n == 0) return m;
    double s = 0;
    for (double x : v) s += x;
    m.mean = s / m.n;
    if (m.n > 1) {
        double ss = 0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.stderr_ = std::sqrt(ss / (m.n - 1) / m.n);
    }
    return m;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + hi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// One-sample Kolmogorov-Smirnov statistic against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    double d = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i; else ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / a.size() -
                                  static_cast<double>(j) / b.size()));
    }
    return d;
}

// Critical value for the KS statistic at significance alpha (asymptotic).
inline double ks_critical(double alpha, std::size_t n) {
    const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c / std::sqrt(static_cast<double>(n));
}

inline double ks_critical_two_sample(double alpha, std::size_t n, std::size_t m) {
    const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

}  // namespace lqg
