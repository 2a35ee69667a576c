#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqg/field.hpp"
#include "lqg/grid.hpp"
#include "lqg/stats.hpp"

namespace lqg {

enum class ChaosFlavor { bulk, boundary, critical_boundary };

inline const char* to_string(ChaosFlavor f) {
    switch (f) {
        case ChaosFlavor::bulk: return "bulk";
        case ChaosFlavor::boundary: return "boundary";
        case ChaosFlavor::critical_boundary: return "critical_boundary";
    }
    return "?";
}

// Cell masses of a multiplicative-chaos measure built from one field sample.
// Critical-flavor prelimit cells are signed; subcritical cells are positive.
struct ChaosMeasure {
    GridSpec grid;
    std::vector<double> masses;
    double gamma = 0.0;
    ChaosFlavor flavor = ChaosFlavor::bulk;
    double eps = 0.0;
    // Critical flavor only: the sqrt(-ln eps)-normalized masses, kept for
    // cross-validation against the derivative form.
    std::vector<double> seneta_heyde;

    double total_mass() const {
        double s = 0.0;
        for (double m : masses) s += m;
        return s;
    }

    // Sum of cells whose centers fall in [a,b] (1d) or the closed box (2d).
    double mass_of_interval(double a, double b) const {
        if (grid.dimension != 1) throw std::invalid_argument("mass_of_interval: 1d only");
        double s = 0.0;
        for (std::size_t i = 0; i < masses.size(); ++i) {
            const double c = grid.center_x(i);
            if (c >= a && c <= b) s += masses[i];
        }
        return s;
    }

    double mass_of_box(double x0, double x1, double y0, double y1) const {
        if (grid.dimension != 2) throw std::invalid_argument("mass_of_box: 2d only");
        double s = 0.0;
        for (std::size_t iy = 0; iy < grid.resolution; ++iy) {
            const double cy = grid.center_y(iy);
            if (cy < y0 || cy > y1) continue;
            for (std::size_t ix = 0; ix < grid.resolution; ++ix) {
                const double cx = grid.center_x(ix);
                if (cx >= x0 && cx <= x1) s += masses[grid.flat_index(ix, iy)];
            }
        }
        return s;
    }
};

// Subcritical GMC: cell mass = exp(a X - a^2/2 sigma^2) * cell volume with
// a = gamma (bulk, 2d) or gamma/2 (boundary, 1d). Unit expectation per cell.
inline ChaosMeasure gmc_measure(const FieldSample& field, double gamma, ChaosFlavor flavor) {
    if (!std::isfinite(gamma) || gamma < 0.0)
        throw std::invalid_argument("gmc_measure: gamma must be finite and >= 0");
    double a = 0.0;
    if (flavor == ChaosFlavor::bulk) {
        if (field.grid.dimension != 2)
            throw std::invalid_argument("gmc_measure: bulk flavor requires dimension 2");
        if (gamma >= 2.0)
            throw std::invalid_argument("gmc_measure: supercritical for bulk (gamma < 2 required)");
        a = gamma;
    } else if (flavor == ChaosFlavor::boundary) {
        if (field.grid.dimension != 1)
            throw std::invalid_argument("gmc_measure: boundary flavor requires dimension 1");
        if (gamma >= 2.0 * std::sqrt(2.0))
            throw std::invalid_argument(
                "gmc_measure: supercritical for boundary (gamma < 2*sqrt(2) required)");
        a = 0.5 * gamma;
    } else {
        throw std::invalid_argument("gmc_measure: use critical_boundary_measure for the critical flavor");
    }
    ChaosMeasure m;
    m.grid = field.grid;
    m.gamma = gamma;
    m.flavor = flavor;
    m.eps = field.spec.eps;
    const double vol = field.grid.cell_volume();
    const double shift = 0.5 * a * a * field.sigma2;
    m.masses.resize(field.values.size());
    for (std::size_t i = 0; i < field.values.size(); ++i)
        m.masses[i] = std::exp(a * field.values[i] - shift) * vol;
    return m;
}

// Critical boundary prelimit (gamma = 2*sqrt(2) in this normalization):
// derivative-martingale cells sqrt(2/pi) (sqrt(2) sigma^2 - X) e^{sqrt(2) X - sigma^2} dx,
// plus Seneta-Heyde cells sqrt(2 ln(1/eps)) e^{sqrt(2) X - sigma^2} dx. The
// norming carries the factor 2 because sqrt(2) X_eps gains variance 2 per unit
// of ln(1/eps) under this cutoff family; with it both prelimits share one limit.
inline ChaosMeasure critical_boundary_measure(const FieldSample& field) {
    if (field.grid.dimension != 1)
        throw std::invalid_argument("critical_boundary_measure: requires dimension 1");
    const double eps = field.spec.eps;
    if (!(eps > 0.0) || -std::log(eps) <= 1.0)
        throw std::invalid_argument("critical_boundary_measure: requires eps < e^{-1}");
    ChaosMeasure m;
    m.grid = field.grid;
    m.gamma = 2.0 * std::sqrt(2.0);
    m.flavor = ChaosFlavor::critical_boundary;
    m.eps = eps;
    const double dx = field.grid.cell_size();
    const double s2 = field.sigma2;
    const double sqrt2 = std::sqrt(2.0);
    const double c_deriv = std::sqrt(2.0 / M_PI);
    const double c_sh = std::sqrt(-2.0 * std::log(eps));
    m.masses.resize(field.values.size());
    m.seneta_heyde.resize(field.values.size());
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        const double x = field.values[i];
        const double w = std::exp(sqrt2 * x - s2);
        m.masses[i] = c_deriv * (sqrt2 * s2 - x) * w * dx;
        m.seneta_heyde[i] = c_sh * w * dx;
    }
    return m;
}

struct BallMassReport {
    std::vector<double> radii;
    std::vector<double> sup_masses;  // sup over centers in the region, per radius
    double fitted_exponent = 0.0;    // OLS slope of ln sup-mass vs ln r
    double beta = 0.0;               // 2 (1 - gamma/2)^2
};

struct Region {
    double x0 = 0.0, x1 = 0.0;  // closed box; y ignored in 1d
    double y0 = 0.0, y1 = 0.0;
};

namespace detail {

// sup over region centers of mass(B(center, r)) for every radius, by FFT
// convolution of the mass grid with the disc indicator on center offsets.
inline std::vector<double> sup_ball_masses_2d(const ChaosMeasure& m,
                                              const std::vector<double>& radii,
                                              const Region& region) {
    const std::size_t n = m.grid.resolution;
    const std::size_t pad = 2 * n;
    const std::size_t total = pad * pad;
    FftwBuffer mass_f(total), kern(total), conv(total);
    {
        FftwBuffer mass_in(total);
        for (std::size_t i = 0; i < total; ++i) mass_in.data[i][0] = mass_in.data[i][1] = 0.0;
        for (std::size_t iy = 0; iy < n; ++iy)
            for (std::size_t ix = 0; ix < n; ++ix)
                mass_in.data[iy * pad + ix][0] = m.masses[m.grid.flat_index(ix, iy)];
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(pad), static_cast<int>(pad),
                                       mass_in.data, mass_f.data, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }
    fftw_plan fwd, bwd;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fwd = fftw_plan_dft_2d(static_cast<int>(pad), static_cast<int>(pad), kern.data,
                               conv.data, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_2d(static_cast<int>(pad), static_cast<int>(pad), kern.data,
                               conv.data, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    const double h = m.grid.cell_size();
    std::vector<double> sups;
    sups.reserve(radii.size());
    for (double r : radii) {
        const auto rho = static_cast<long>(std::floor(r / h));
        for (std::size_t i = 0; i < total; ++i) kern.data[i][0] = kern.data[i][1] = 0.0;
        for (long dy = -rho; dy <= rho; ++dy)
            for (long dx = -rho; dx <= rho; ++dx)
                if (static_cast<double>(dx * dx + dy * dy) * h * h <= r * r) {
                    const std::size_t jy = static_cast<std::size_t>((dy + static_cast<long>(pad)) % static_cast<long>(pad));
                    const std::size_t jx = static_cast<std::size_t>((dx + static_cast<long>(pad)) % static_cast<long>(pad));
                    kern.data[jy * pad + jx][0] = 1.0;
                }
        fftw_execute_dft(fwd, kern.data, conv.data);
        // pointwise product into kern, then inverse
        for (std::size_t i = 0; i < total; ++i) {
            const double ar = mass_f.data[i][0], ai = mass_f.data[i][1];
            const double br = conv.data[i][0], bi = conv.data[i][1];
            kern.data[i][0] = ar * br - ai * bi;
            kern.data[i][1] = ar * bi + ai * br;
        }
        fftw_execute_dft(bwd, kern.data, conv.data);
        const double norm = 1.0 / static_cast<double>(total);
        double sup = -std::numeric_limits<double>::infinity();
        for (std::size_t iy = 0; iy < n; ++iy) {
            const double cy = m.grid.center_y(iy);
            if (cy < region.y0 || cy > region.y1) continue;
            for (std::size_t ix = 0; ix < n; ++ix) {
                const double cx = m.grid.center_x(ix);
                if (cx < region.x0 || cx > region.x1) continue;
                sup = std::max(sup, conv.data[iy * pad + ix][0] * norm);
            }
        }
        sups.push_back(sup);
    }
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    return sups;
}

inline std::vector<double> sup_ball_masses_1d(const ChaosMeasure& m,
                                              const std::vector<double>& radii,
                                              const Region& region) {
    const std::size_t n = m.grid.resolution;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + m.masses[i];
    const double h = m.grid.cell_size();
    std::vector<double> sups;
    sups.reserve(radii.size());
    for (double r : radii) {
        const auto rho = static_cast<long>(std::floor(r / h));
        double sup = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double c = m.grid.center_x(i);
            if (c < region.x0 || c > region.x1) continue;
            const std::size_t lo = static_cast<std::size_t>(std::max<long>(0, static_cast<long>(i) - rho));
            const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(rho));
            sup = std::max(sup, prefix[hi + 1] - prefix[lo]);
        }
        sups.push_back(sup);
    }
    return sups;
}

}  // namespace detail

// Fits the scaling of sup-ball masses over the given radii. The report's
// beta = 2 (1 - gamma/2)^2 is the multifractal reference exponent.
inline BallMassReport ball_mass_exponent(const ChaosMeasure& m, std::vector<double> radii,
                                         const Region& region) {
    if (radii.size() < 4) throw std::invalid_argument("ball_mass_exponent: need >= 4 radii");
    std::sort(radii.begin(), radii.end());
    if (!(radii.front() > 0.0) || !(radii.back() < 1.0))
        throw std::invalid_argument("ball_mass_exponent: radii must lie in (0,1)");
    if (radii.back() < 10.0 * radii.front())
        throw std::invalid_argument("ball_mass_exponent: radii must span at least a decade");
    const double margin = radii.back();
    const double gx0 = m.grid.origin_x, gx1 = m.grid.origin_x + m.grid.extent;
    if (region.x0 - margin < gx0 || region.x1 + margin > gx1)
        throw std::invalid_argument("ball_mass_exponent: region exceeds grid (margin >= max radius required)");
    if (m.grid.dimension == 2) {
        const double gy0 = m.grid.origin_y, gy1 = m.grid.origin_y + m.grid.extent;
        if (region.y0 - margin < gy0 || region.y1 + margin > gy1)
            throw std::invalid_argument("ball_mass_exponent: region exceeds grid (margin >= max radius required)");
    }
    BallMassReport rep;
    rep.radii = radii;
    rep.sup_masses = m.grid.dimension == 2 ? detail::sup_ball_masses_2d(m, radii, region)
                                           : detail::sup_ball_masses_1d(m, radii, region);
    std::vector<double> lr, lm;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        lr.push_back(std::log(radii[i]));
        lm.push_back(std::log(rep.sup_masses[i]));
    }
    rep.fitted_exponent = fit_line(lr, lm).slope;
    rep.beta = 2.0 * (1.0 - 0.5 * m.gamma) * (1.0 - 0.5 * m.gamma);
    return rep;
}

// --- serialization ---

inline void write_measure(std::ostream& os, const ChaosMeasure& m) {
    os.write("LQGM\1\n", 6);
    detail::write_pod(os, static_cast<std::int32_t>(m.grid.dimension));
    detail::write_pod(os, static_cast<std::uint64_t>(m.grid.resolution));
    detail::write_pod(os, m.grid.origin_x);
    detail::write_pod(os, m.grid.origin_y);
    detail::write_pod(os, m.grid.extent);
    detail::write_pod(os, m.gamma);
    detail::write_pod(os, m.eps);
    detail::write_pod(os, static_cast<std::int32_t>(m.flavor));
    detail::write_pod(os, static_cast<std::uint64_t>(m.masses.size()));
    os.write(reinterpret_cast<const char*>(m.masses.data()),
             static_cast<std::streamsize>(m.masses.size() * sizeof(double)));
    detail::write_pod(os, static_cast<std::uint64_t>(m.seneta_heyde.size()));
    os.write(reinterpret_cast<const char*>(m.seneta_heyde.data()),
             static_cast<std::streamsize>(m.seneta_heyde.size() * sizeof(double)));
}

inline ChaosMeasure read_measure(std::istream& is) {
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, "LQGM\1\n", 6) != 0)
        throw std::runtime_error("read_measure: bad magic");
    ChaosMeasure m;
    std::int32_t dim = 0, flavor = 0;
    std::uint64_t res = 0, count = 0;
    detail::read_pod(is, dim);
    detail::read_pod(is, res);
    detail::read_pod(is, m.grid.origin_x);
    detail::read_pod(is, m.grid.origin_y);
    detail::read_pod(is, m.grid.extent);
    detail::read_pod(is, m.gamma);
    detail::read_pod(is, m.eps);
    detail::read_pod(is, flavor);
    m.grid.dimension = dim;
    m.grid.resolution = res;
    m.flavor = static_cast<ChaosFlavor>(flavor);
    detail::read_pod(is, count);
    m.masses.resize(count);
    is.read(reinterpret_cast<char*>(m.masses.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    detail::read_pod(is, count);
    m.seneta_heyde.resize(count);
    is.read(reinterpret_cast<char*>(m.seneta_heyde.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("read_measure: truncated stream");
    return m;
}

}  // namespace lqg
