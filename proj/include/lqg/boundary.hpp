#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lqg/chaos.hpp"
#include "lqg/errors.hpp"
#include "lqg/rng.hpp"
#include "lqg/stats.hpp"

namespace lqg {

// Tabulated strictly increasing map phi (the boundary diffeomorphism) with
// forward and inverse evaluation by linear interpolation between knots.
class MonotoneMap {
public:
    MonotoneMap(std::vector<double> knots_x, std::vector<double> knots_phi, double gamma,
                ChaosFlavor flavor)
        : knots_x_(std::move(knots_x)), knots_phi_(std::move(knots_phi)), gamma_(gamma),
          flavor_(flavor) {
        if (knots_x_.size() != knots_phi_.size() || knots_x_.size() < 2)
            throw std::invalid_argument("MonotoneMap: need >= 2 matching knots");
        for (std::size_t i = 1; i < knots_x_.size(); ++i) {
            if (!(knots_x_[i] > knots_x_[i - 1]))
                throw std::invalid_argument("MonotoneMap: knots_x not strictly increasing");
            if (!(knots_phi_[i] > knots_phi_[i - 1]))
                throw std::invalid_argument("MonotoneMap: knots_phi not strictly increasing");
        }
    }

    double x_min() const { return knots_x_.front(); }
    double x_max() const { return knots_x_.back(); }
    double phi_min() const { return knots_phi_.front(); }
    double phi_max() const { return knots_phi_.back(); }
    double knot_spacing() const { return knots_x_[1] - knots_x_[0]; }
    double gamma() const { return gamma_; }
    ChaosFlavor flavor() const { return flavor_; }
    const std::vector<double>& knots_x() const { return knots_x_; }
    const std::vector<double>& knots_phi() const { return knots_phi_; }

    double operator()(double x) const {
        if (x < x_min() || x > x_max())
            throw RangeError("phi: x outside tabulated range", x_min(), x_max(), x);
        return interp(knots_x_, knots_phi_, x);
    }

    double inverse(double y) const {
        if (y < phi_min() || y > phi_max())
            throw RangeError("phi_inverse: y outside tabulated range", phi_min(), phi_max(), y);
        return interp(knots_phi_, knots_x_, y);
    }

private:
    static double interp(const std::vector<double>& from, const std::vector<double>& to,
                         double v) {
        const auto it = std::upper_bound(from.begin(), from.end(), v);
        std::size_t hi = static_cast<std::size_t>(it - from.begin());
        if (hi == 0) return to.front();
        if (hi == from.size()) return to.back();
        const std::size_t lo = hi - 1;
        const double w = (v - from[lo]) / (from[hi] - from[lo]);
        return to[lo] + w * (to[hi] - to[lo]);
    }

    std::vector<double> knots_x_, knots_phi_;
    double gamma_;
    ChaosFlavor flavor_;
};

inline double phi_inverse(const MonotoneMap& map, double y) { return map.inverse(y); }

// Cumulative mass map anchored so phi(0) = 0. Subcritical knots sit at cell
// edges; the critical prelimit is tabulated at aggregates of width agg_width
// (its cell values are signed) and the realization is rejected if any
// aggregate increment is nonpositive.
inline MonotoneMap build_phi(const ChaosMeasure& measure, double agg_width = 1.0 / 16.0) {
    if (measure.flavor == ChaosFlavor::bulk)
        throw std::invalid_argument("build_phi: boundary or critical_boundary measure required");
    if (measure.grid.dimension != 1)
        throw std::invalid_argument("build_phi: 1d measure required");
    const GridSpec& g = measure.grid;
    if (!(g.origin_x <= 0.0 && g.origin_x + g.extent >= 0.0))
        throw std::invalid_argument("build_phi: grid must cover 0");
    const std::size_t n = g.resolution;
    std::size_t block = 1;
    if (measure.flavor == ChaosFlavor::critical_boundary) {
        block = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(agg_width / g.cell_size())));
        while (n % block != 0) --block;  // resolutions are powers of two
    }
    const std::size_t knots = n / block + 1;
    std::vector<double> kx(knots), kphi(knots);
    kphi[0] = 0.0;
    for (std::size_t j = 0; j < knots; ++j)
        kx[j] = g.origin_x + static_cast<double>(j * block) * g.cell_size();
    for (std::size_t j = 0; j < knots - 1; ++j) {
        double inc = 0.0;
        for (std::size_t c = 0; c < block; ++c) inc += measure.masses[j * block + c];
        if (measure.flavor == ChaosFlavor::critical_boundary) {
            if (!(inc > 0.0))
                throw RejectedRealization(
                    "build_phi: nonpositive critical aggregate increment; resample");
        } else if (!(inc > 0.0)) {
            throw std::logic_error("build_phi: nonpositive subcritical cell mass (construction bug)");
        }
        kphi[j + 1] = kphi[j] + inc;
    }
    // anchor: phi(0) = 0 exactly at a knot, interpolated otherwise
    double at0;
    {
        const auto it = std::upper_bound(kx.begin(), kx.end(), 0.0);
        std::size_t hi = static_cast<std::size_t>(it - kx.begin());
        if (hi == 0) at0 = kphi.front();
        else if (hi == kx.size()) at0 = kphi.back();
        else {
            const std::size_t lo = hi - 1;
            const double w = (0.0 - kx[lo]) / (kx[hi] - kx[lo]);
            at0 = kphi[lo] + w * (kphi[hi] - kphi[lo]);
        }
    }
    for (double& v : kphi) v -= at0;
    return MonotoneMap(std::move(kx), std::move(kphi), measure.gamma, measure.flavor);
}

struct CriticalPhi {
    MonotoneMap map;
    ChaosMeasure measure;
    std::size_t rejections = 0;  // resampled realizations (nonpositive aggregate)
};

// Samples critical fields until build_phi accepts one; the rejection count is
// the honest prelimit-bias meter.
inline CriticalPhi build_critical_phi(const CirculantSampler& sampler, std::uint64_t seed,
                                      std::size_t max_attempts = 64,
                                      double agg_width = 1.0 / 16.0) {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        ChaosMeasure m = critical_boundary_measure(sampler.sample(derive_seed(seed, attempt)));
        try {
            MonotoneMap map = build_phi(m, agg_width);
            return CriticalPhi{std::move(map), std::move(m), attempt};
        } catch (const RejectedRealization&) {
        }
    }
    throw std::runtime_error("build_critical_phi: no acceptable realization in " +
                             std::to_string(max_attempts) + " attempts");
}

// Boundary quantum distance d(x,y) = |phi(x) - phi(y)|.
inline double boundary_distance(const MonotoneMap& map, double x, double y) {
    return std::fabs(map(x) - map(y));
}

// Boundary LBM: phi^{-1}(phi(x0) + B_t) sampled at the given times.
inline std::vector<double> boundary_lbm_path(const MonotoneMap& map, double x0,
                                             const std::vector<double>& times,
                                             std::uint64_t seed) {
    if (x0 < map.x_min() || x0 > map.x_max())
        throw RangeError("boundary_lbm_path: x0 outside range", map.x_min(), map.x_max(), x0);
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(times.size());
    const double start = map(x0);
    double b = 0.0, prev_t = 0.0;
    for (double t : times) {
        if (!(t >= prev_t))
            throw std::invalid_argument("boundary_lbm_path: times must be sorted and >= 0");
        if (t > prev_t) b += rng.normal(0.0, std::sqrt(t - prev_t));
        prev_t = t;
        const double y = start + b;
        if (y < map.phi_min() || y > map.phi_max())
            throw PathExitError("boundary_lbm_path: path left tabulated range", t);
        out.push_back(map.inverse(y));
    }
    return out;
}

// Explicit heat kernel w.r.t. the boundary measure M.
inline double boundary_heat_kernel(const MonotoneMap& map, double x, double y, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("boundary_heat_kernel: t must be > 0");
    const double d = boundary_distance(map, x, y);
    return std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * M_PI * t);
}

// Exact P(LBM_t in [a,b]) starting from x0; equals the cell-wise integral of
// the heat kernel against M for the tabulated (piecewise-linear) phi.
inline double boundary_interval_probability(const MonotoneMap& map, double x0, double a,
                                            double b, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("boundary_interval_probability: t must be > 0");
    const double p0 = map(x0);
    const double sd = std::sqrt(t);
    return normal_cdf((map(b) - p0) / sd) - normal_cdf((map(a) - p0) / sd);
}

// OLS slope of ln p_t(x,x) against ln t over the given times; d_S = -2 slope.
inline double boundary_spectral_dimension(const MonotoneMap& map,
                                          const std::vector<double>& t_grid) {
    if (t_grid.size() < 4)
        throw std::invalid_argument("boundary_spectral_dimension: need >= 4 times");
    double lo = t_grid.front(), hi = t_grid.front();
    for (double t : t_grid) {
        if (!(t > 0.0)) throw std::invalid_argument("boundary_spectral_dimension: t must be > 0");
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    if (hi / lo < 100.0)
        throw std::invalid_argument("boundary_spectral_dimension: times must span >= 2 decades");
    const double x = 0.5 * (map.x_min() + map.x_max());
    std::vector<double> lt, lp;
    for (double t : t_grid) {
        lt.push_back(std::log(t));
        lp.push_back(std::log(boundary_heat_kernel(map, x, x, t)));
    }
    return -2.0 * fit_line(lt, lp).slope;
}

}  // namespace lqg
