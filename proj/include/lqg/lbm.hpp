#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/field.hpp"
#include "lqg/grid.hpp"
#include "lqg/rng.hpp"

namespace lqg {

// Field evaluation along paths. Grid backend: bilinear interpolation of one
// sampled grid (fast). Exact backend: joint dense Gaussian draw at the query
// points (small instances; the bias oracle for the grid route).
class FieldAccess {
public:
    virtual ~FieldAccess() = default;
    virtual double sigma2() const = 0;
    virtual double eps() const = 0;
    virtual void values_at(std::span<const Point2> pts, std::span<double> out) const = 0;
};

class GridFieldAccess final : public FieldAccess {
public:
    explicit GridFieldAccess(std::shared_ptr<const FieldSample> field)
        : field_(std::move(field)) {
        if (!field_) throw std::invalid_argument("GridFieldAccess: null field");
    }
    double sigma2() const override { return field_->sigma2; }
    double eps() const override { return field_->spec.eps; }
    void values_at(std::span<const Point2> pts, std::span<double> out) const override {
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = field_->interpolate(pts[i]);
    }
    const FieldSample& field() const { return *field_; }

private:
    std::shared_ptr<const FieldSample> field_;
};

class ExactFieldAccess final : public FieldAccess {
public:
    ExactFieldAccess(CovarianceSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
        spec_.validate();
        if (!(spec_.eps > 0.0))
            throw std::invalid_argument("ExactFieldAccess: cutoff eps must be > 0");
        sigma2_ = cutoff_covariance(0.0, spec_);
    }
    double sigma2() const override { return sigma2_; }
    double eps() const override { return spec_.eps; }
    void values_at(std::span<const Point2> pts, std::span<double> out) const override {
        const std::vector<Point2> v(pts.begin(), pts.end());
        const std::vector<double> x = sample_field_at_points(v, spec_, seed_);
        std::copy(x.begin(), x.end(), out.begin());
    }

private:
    CovarianceSpec spec_;
    std::uint64_t seed_;
    double sigma2_ = 0.0;
};

// One field realization per Monte Carlo replicate (annealed), or the same
// one every time (quenched).
using FieldProvider = std::function<std::shared_ptr<const FieldAccess>(std::uint64_t seed)>;

inline FieldProvider annealed_provider(std::shared_ptr<const CirculantSampler> sampler) {
    return [sampler](std::uint64_t seed) -> std::shared_ptr<const FieldAccess> {
        return std::make_shared<GridFieldAccess>(
            std::make_shared<FieldSample>(sampler->sample(seed)));
    };
}

inline FieldProvider quenched_provider(std::shared_ptr<const FieldSample> field) {
    auto access = std::make_shared<GridFieldAccess>(std::move(field));
    return [access](std::uint64_t) -> std::shared_ptr<const FieldAccess> { return access; };
}

inline FieldProvider exact_provider(CovarianceSpec spec) {
    return [spec](std::uint64_t seed) -> std::shared_ptr<const FieldAccess> {
        return std::make_shared<ExactFieldAccess>(spec, seed);
    };
}

struct WalkPath {
    std::vector<double> times;      // starts at 0, strictly increasing
    std::vector<Point2> positions;  // positions[0] = start
    Point2 start;
    std::uint64_t seed = 0;
};

// GMC clock F along a path, tabulated at the path times.
struct Clock {
    std::vector<double> times;
    std::vector<double> values;  // values[0] = 0, strictly increasing

    double total() const { return values.back(); }
};

inline WalkPath sample_walk(Point2 start, double horizon, std::size_t n_steps,
                            std::uint64_t seed) {
    if (n_steps < 2) throw std::invalid_argument("sample_walk: n_steps >= 2 required");
    if (!(horizon > 0.0)) throw std::invalid_argument("sample_walk: horizon must be > 0");
    WalkPath p;
    p.start = start;
    p.seed = seed;
    p.times.resize(n_steps + 1);
    p.positions.resize(n_steps + 1);
    const double dt = horizon / static_cast<double>(n_steps);
    const double sd = std::sqrt(dt);
    Rng rng(seed);
    p.times[0] = 0.0;
    p.positions[0] = start;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        p.times[k] = static_cast<double>(k) * dt;
        p.positions[k] = {p.positions[k - 1].x + sd * rng.normal(),
                          p.positions[k - 1].y + sd * rng.normal()};
    }
    return p;
}

namespace detail {

inline void check_clock_preconditions(double gamma, double max_dt, const FieldAccess& access) {
    if (!(gamma >= 0.0) || gamma >= 2.0)
        throw std::invalid_argument("clock: gamma must lie in [0, 2)");
    if (gamma > 0.0 && access.eps() < 2.0 * std::sqrt(max_dt) * (1.0 - 1e-9))
        throw std::invalid_argument(
            "clock: cutoff unresolved, need eps >= 2*sqrt(dt) (refine steps or coarsen cutoff)");
}

}  // namespace detail

// Left-endpoint Riemann sum of exp(gamma X(B_r) - gamma^2/2 sigma^2) dr.
inline Clock clock(const WalkPath& path, double gamma, const FieldAccess& access) {
    const std::size_t n = path.times.size();
    if (n < 2) throw std::invalid_argument("clock: path too short");
    double max_dt = 0.0;
    for (std::size_t k = 1; k < n; ++k) max_dt = std::max(max_dt, path.times[k] - path.times[k - 1]);
    detail::check_clock_preconditions(gamma, max_dt, access);
    Clock c;
    c.times = path.times;
    c.values.assign(n, 0.0);
    if (gamma == 0.0) {
        for (std::size_t k = 0; k < n; ++k) c.values[k] = path.times[k];
        return c;
    }
    std::vector<double> x(n);
    access.values_at(path.positions, x);
    const double shift = 0.5 * gamma * gamma * access.sigma2();
    for (std::size_t k = 1; k < n; ++k) {
        const double w = std::exp(gamma * x[k - 1] - shift);
        c.values[k] = c.values[k - 1] + w * (path.times[k] - path.times[k - 1]);
    }
    return c;
}

// Piecewise-linear inverse of the tabulated clock.
inline double clock_inverse(const Clock& c, double s) {
    if (!(s >= 0.0)) throw std::invalid_argument("clock_inverse: s must be >= 0");
    if (s > c.values.back())
        throw RangeError("clock_inverse: s beyond clock range (extend horizon)", 0.0,
                         c.values.back(), s);
    const auto it = std::upper_bound(c.values.begin(), c.values.end(), s);
    std::size_t hi = static_cast<std::size_t>(it - c.values.begin());
    if (hi == 0) return c.times.front();
    if (hi == c.values.size()) return c.times.back();
    const std::size_t lo = hi - 1;
    const double w = (s - c.values[lo]) / (c.values[hi] - c.values[lo]);
    return c.times[lo] + w * (c.times[hi] - c.times[lo]);
}

struct LbmOptions {
    double horizon = 0.0;       // 0 -> max(2 t_liouville, 1)
    double dt = 0.0;            // 0 -> (eps/2)^2 (resolves the cutoff)
    unsigned max_doublings = 3;
};

// LBM position via time change: B at F^{-1}(t_liouville). The horizon doubles
// (same driving path, extended) until the clock covers t_liouville.
inline Point2 lbm_position(Point2 start, double t_liouville, double gamma,
                           const FieldAccess& access, std::uint64_t seed,
                           const LbmOptions& opts = {}) {
    if (!(t_liouville > 0.0)) throw std::invalid_argument("lbm_position: t_liouville must be > 0");
    double dt = opts.dt > 0.0 ? opts.dt : 0.25 * access.eps() * access.eps();
    detail::check_clock_preconditions(gamma, dt, access);
    double horizon = opts.horizon > 0.0 ? opts.horizon : std::max(2.0 * t_liouville, 1.0);
    Rng rng(seed);
    std::vector<double> times{0.0};
    std::vector<Point2> positions{start};
    const double shift = 0.5 * gamma * gamma * access.sigma2();
    for (unsigned attempt = 0;; ++attempt) {
        const auto target = static_cast<std::size_t>(std::ceil(horizon / dt));
        const double sd = std::sqrt(dt);
        while (times.size() <= target) {
            positions.push_back({positions.back().x + sd * rng.normal(),
                                 positions.back().y + sd * rng.normal()});
            times.push_back(static_cast<double>(times.size()) * dt);
        }
        Clock c;
        c.times = times;
        c.values.assign(times.size(), 0.0);
        if (gamma == 0.0) {
            c.values = times;
        } else {
            std::vector<double> x(positions.size());
            access.values_at(positions, x);
            for (std::size_t k = 1; k < times.size(); ++k)
                c.values[k] = c.values[k - 1] + std::exp(gamma * x[k - 1] - shift) * dt;
        }
        if (c.values.back() >= t_liouville) {
            const double u = clock_inverse(c, t_liouville);
            const auto idx = std::min(static_cast<std::size_t>(u / dt), times.size() - 2);
            const double w = (u - times[idx]) / dt;
            return {positions[idx].x + w * (positions[idx + 1].x - positions[idx].x),
                    positions[idx].y + w * (positions[idx + 1].y - positions[idx].y)};
        }
        if (attempt >= opts.max_doublings)
            throw std::runtime_error("lbm_position: horizon exhausted, clock reached " +
                                     std::to_string(c.values.back()) + " < " +
                                     std::to_string(t_liouville));
        horizon *= 2.0;
    }
}

}  // namespace lqg
