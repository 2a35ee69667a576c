#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/grid.hpp"
#include "lqg/lbm.hpp"
#include "lqg/parallel.hpp"
#include "lqg/rng.hpp"
#include "lqg/special.hpp"
#include "lqg/stats.hpp"

namespace lqg {

struct BridgePath {
    Point2 x, y;
    double lifetime = 0.0;
    std::vector<double> times;      // 0 .. lifetime inclusive
    std::vector<Point2> positions;  // pinned at both ends
    std::uint64_t seed = 0;
};

namespace detail {

// Standard bridge on [0,1] pinned to 0 at both ends, n uniform steps,
// sequential conditional Gaussians. z must have n+1 slots.
inline void standard_bridge(std::size_t n, Rng& rng, std::vector<Point2>& z) {
    z[0] = {0.0, 0.0};
    for (std::size_t k = 0; k + 1 <= n; ++k) {
        const double remaining = static_cast<double>(n - k);
        const double shrink = (remaining - 1.0) / remaining;
        const double sd = std::sqrt(shrink / static_cast<double>(n));
        z[k + 1] = {z[k].x * shrink + sd * rng.normal(), z[k].y * shrink + sd * rng.normal()};
    }
    z[n] = {0.0, 0.0};
}

}  // namespace detail

// Brownian bridge from x to y with the given lifetime; marginal at time s is
// Gaussian with mean x + (s/t)(y-x) and variance s(t-s)/t per coordinate.
inline BridgePath sample_bridge(Point2 x, Point2 y, double t, std::size_t n_steps,
                                std::uint64_t seed) {
    if (!(t > 0.0)) throw std::invalid_argument("sample_bridge: lifetime must be > 0");
    if (n_steps < 2) throw std::invalid_argument("sample_bridge: n_steps >= 2 required");
    BridgePath b;
    b.x = x;
    b.y = y;
    b.lifetime = t;
    b.seed = seed;
    Rng rng(seed);
    std::vector<Point2> z(n_steps + 1);
    detail::standard_bridge(n_steps, rng, z);
    const double sqt = std::sqrt(t);
    b.times.resize(n_steps + 1);
    b.positions.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        const double u = static_cast<double>(k) / static_cast<double>(n_steps);
        b.times[k] = u * t;
        b.positions[k] = {x.x + u * (y.x - x.x) + sqt * z[k].x,
                          x.y + u * (y.y - x.y) + sqt * z[k].y};
    }
    b.positions.front() = x;
    b.positions.back() = y;
    return b;
}

// Radon-Nikodym weight of the bridge law w.r.t. the free motion on [0, s]:
// (t/(t-s)) exp(|y-x|^2/(2t) - |B_s-y|^2/(2(t-s))).
inline double rn_weight(Point2 x, Point2 b_s, double s, Point2 y, double t) {
    if (!(s >= 0.0) || !(s < t)) throw std::invalid_argument("rn_weight: need 0 <= s < t");
    const double dxy = distance(x, y);
    const double dby = distance(b_s, y);
    return t / (t - s) * std::exp(dxy * dxy / (2.0 * t) - dby * dby / (2.0 * (t - s)));
}

inline double rn_weight(const WalkPath& bm_prefix, Point2 y, double t) {
    return rn_weight(bm_prefix.start, bm_prefix.positions.back(), bm_prefix.times.back(), y, t);
}

// Bridge GMC clock F(x,y,t,s): left-endpoint Riemann sum over [0, s].
inline double bridge_clock(const BridgePath& bridge, double gamma, const FieldAccess& access,
                           double s) {
    if (!(s >= 0.0) || s > bridge.lifetime * (1.0 + 1e-12))
        throw std::invalid_argument("bridge_clock: s must lie in [0, lifetime]");
    const std::size_t n = bridge.times.size();
    double max_dt = 0.0;
    for (std::size_t k = 1; k < n; ++k)
        max_dt = std::max(max_dt, bridge.times[k] - bridge.times[k - 1]);
    detail::check_clock_preconditions(gamma, max_dt, access);
    if (gamma == 0.0) return std::min(s, bridge.lifetime);
    std::vector<double> x(n);
    access.values_at(bridge.positions, x);
    const double shift = 0.5 * gamma * gamma * access.sigma2();
    double f = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (bridge.times[k] >= s) break;
        const double upto = std::min(bridge.times[k + 1], s);
        f += std::exp(gamma * x[k] - shift) * (upto - bridge.times[k]);
    }
    return f;
}

// Closed form of int_0^{t/2} p_s(y,z) ds for the planar heat kernel:
// E1(|y-z|^2 / t) / (2 pi). Diverges on the diagonal.
inline double occupation_kernel_integral(Point2 y, Point2 z, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("occupation_kernel_integral: t must be > 0");
    const double d = distance(y, z);
    if (d == 0.0) return std::numeric_limits<double>::infinity();
    return expint_e1(d * d / t) / (2.0 * M_PI);
}

// ---------------------------------------------------------------------------
// Integral-transform estimator (Brownian bridge decomposition)
// ---------------------------------------------------------------------------

struct TransformConfig {
    std::size_t n_bridges = 6000;
    std::size_t n_steps = 8192;  // cap on bridge steps per t-node (power of two)
    double t_low = 1e-4;
    double t_high = 0.0;  // 0 -> 50 / min(lambda)
    std::size_t n_t_points = 40;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t divergence_levels = 4;  // t_low ladder (decades) for alpha = 0
    double divergence_r2 = 0.95;
};

struct TransformEstimate {
    double gamma = 0.0, alpha = 0.0, lambda = 0.0;
    Point2 x, y;
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n_bridges = 0;
    double t_low = 0.0, t_high = 0.0;
    bool divergent = false;
    double log_coeff = 0.0;  // fitted coefficient of ln(1/t_low) when divergent
    double log_r2 = 0.0;
    std::uint64_t seed = 0;
};

struct TransformProbe {
    double alpha = 1.0;
    double lambda = 1.0;
};

namespace detail {

struct TimeGrid {
    std::vector<double> t;
    double h = 0.0;             // spacing in ln t
    std::size_t per_decade = 0; // decade-aligned so t_low ladders hit nodes
};

inline TimeGrid make_time_grid(double t_low, double t_high, std::size_t n_t_points) {
    if (!(t_low > 0.0) || !(t_high > t_low))
        throw std::invalid_argument("transform: need 0 < t_low < t_high");
    const double decades = std::log10(t_high / t_low);
    TimeGrid g;
    const double want = std::max(3.0, (static_cast<double>(n_t_points) - 1.0) / decades);
    g.per_decade = static_cast<std::size_t>(std::llround(want));
    g.h = std::log(10.0) / static_cast<double>(g.per_decade);
    const auto count = static_cast<std::size_t>(
        std::ceil(std::log(t_high / t_low) / g.h - 1e-9));
    g.t.resize(count + 1);
    for (std::size_t j = 0; j <= count; ++j) g.t[j] = t_low * std::exp(g.h * static_cast<double>(j));
    return g;
}

inline std::size_t next_pow2(double x) {
    std::size_t n = 1;
    while (static_cast<double>(n) < x) n <<= 1;
    return n;
}

// F(x,y,t_j,t_j) for every node of the grid, for every replicate, with all
// node bridges of a replicate dyadic restrictions of one fine standard bridge.
class BridgeClockTable {
public:
    BridgeClockTable(Point2 x, Point2 y, double gamma, const TimeGrid& grid,
                     const TransformConfig& cfg, const FieldProvider& provider)
        : x_(x), y_(y), gamma_(gamma), grid_(grid) {
        const std::size_t nodes = grid_.t.size();
        steps_.resize(nodes, 16);
        if (gamma_ > 0.0) {
            if (!provider)
                throw std::invalid_argument("transform: field provider required for gamma > 0");
            auto probe = provider(cfg.seed);
            eps_ = probe->eps();
            const double dt_max = 0.25 * eps_ * eps_;
            const std::size_t cap = next_pow2(static_cast<double>(cfg.n_steps));
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t need = next_pow2(grid_.t[j] / dt_max);
                steps_[j] = std::clamp<std::size_t>(need, 16, cap);
                if (static_cast<double>(steps_[j]) < grid_.t[j] / dt_max * (1.0 - 1e-9))
                    throw std::invalid_argument(
                        "transform: n_steps too small to resolve the cutoff at t_high "
                        "(raise n_steps or coarsen eps)");
            }
        }
        n_fine_ = *std::max_element(steps_.begin(), steps_.end());
        rows_.assign(cfg.n_bridges * nodes, 0.0);
        if (gamma_ == 0.0) {
            for (std::size_t r = 0; r < cfg.n_bridges; ++r)
                for (std::size_t j = 0; j < nodes; ++j) rows_[r * nodes + j] = grid_.t[j];
            return;
        }
        parallel_for(cfg.n_bridges, cfg.workers, [&](std::size_t r) {
            const std::uint64_t seed_r = derive_seed(cfg.seed, r);
            auto access = provider(derive_seed(seed_r, 101));
            Rng rng(derive_seed(seed_r, 202));
            std::vector<Point2> z(n_fine_ + 1);
            standard_bridge(n_fine_, rng, z);
            std::vector<Point2> pos;
            std::vector<double> vals;
            const double shift = 0.5 * gamma_ * gamma_ * access->sigma2();
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t m = steps_[j];
                const std::size_t stride = n_fine_ / m;
                const double t = grid_.t[j];
                const double sqt = std::sqrt(t);
                pos.resize(m);
                vals.resize(m);
                for (std::size_t k = 0; k < m; ++k) {
                    const double u = static_cast<double>(k) / static_cast<double>(m);
                    const Point2& zz = z[k * stride];
                    pos[k] = {x_.x + u * (y_.x - x_.x) + sqt * zz.x,
                              x_.y + u * (y_.y - x_.y) + sqt * zz.y};
                }
                access->values_at(pos, vals);
                double f = 0.0;
                const double ds = t / static_cast<double>(m);
                for (std::size_t k = 0; k < m; ++k) f += std::exp(gamma_ * vals[k] - shift);
                rows_[r * nodes + j] = f * ds;
            }
        });
    }

    double f(std::size_t replicate, std::size_t node) const {
        return rows_[replicate * grid_.t.size() + node];
    }
    const TimeGrid& grid() const { return grid_; }
    double eps() const { return eps_; }

private:
    Point2 x_, y_;
    double gamma_;
    TimeGrid grid_;
    std::vector<std::size_t> steps_;
    std::size_t n_fine_ = 16;
    std::vector<double> rows_;
    double eps_ = 0.0;
};

inline double g_of_f(double f, double alpha, double lambda) {
    if (f <= 0.0) return 0.0;
    if (alpha == 0.0) return std::exp(-lambda * f);
    return std::exp(alpha * std::log(f) - lambda * f);  // log-space, overflow-safe
}

}  // namespace detail

// Estimates int G(t) p_t(x,y) dt with G(t) = t^alpha e^{-lambda t} via the
// bridge decomposition: outer trapezoid in ln t, inner Monte Carlo over
// (field, bridge) replicates shared across all probes (common random numbers).
// For alpha = 0 on the diagonal, a t_low refinement ladder classifies the
// integral as convergent or logarithmically divergent.
inline std::vector<TransformEstimate> transform_batch(
    Point2 x, Point2 y, double gamma, const std::vector<TransformProbe>& probes,
    const TransformConfig& cfg, const FieldProvider& provider,
    std::vector<std::vector<double>>* replicate_values = nullptr) {
    if (probes.empty()) throw std::invalid_argument("transform_batch: no probes");
    if (!(gamma >= 0.0) || gamma >= 2.0)
        throw std::invalid_argument("transform_batch: gamma must lie in [0, 2)");
    if (cfg.n_bridges < 2) throw std::invalid_argument("transform_batch: n_bridges >= 2");
    double lambda_min = std::numeric_limits<double>::infinity();
    for (const auto& p : probes) {
        if (!(p.lambda > 0.0)) throw std::invalid_argument("transform_batch: lambda must be > 0");
        if (!(p.alpha >= 0.0)) throw std::invalid_argument("transform_batch: alpha must be >= 0");
        lambda_min = std::min(lambda_min, p.lambda);
    }
    const double t_high = cfg.t_high > 0.0 ? cfg.t_high : 50.0 / lambda_min;
    const detail::TimeGrid grid = detail::make_time_grid(cfg.t_low, t_high, cfg.n_t_points);
    const detail::BridgeClockTable table(x, y, gamma, grid, cfg, provider);

    const std::size_t nodes = grid.t.size();
    const double d = distance(x, y);
    const bool diagonal = d == 0.0;
    // node weight: trapezoid in v = ln t times the Jacobian t and the
    // explicit Gaussian kernel of the decomposition
    std::vector<double> node_w(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        const double w = (j == 0 || j + 1 == nodes) ? 0.5 * grid.h : grid.h;
        node_w[j] = w * std::exp(-d * d / (2.0 * grid.t[j])) / (2.0 * M_PI);
    }
    // t_low refinement anchors (decade-aligned suffix starts), finest last
    std::vector<std::size_t> anchors;
    {
        std::size_t levels = cfg.divergence_levels;
        while (levels > 1 && (levels - 1) * grid.per_decade >= nodes) --levels;
        for (std::size_t l = 0; l < levels; ++l)
            anchors.push_back((levels - 1 - l) * grid.per_decade);
    }

    std::vector<TransformEstimate> out;
    out.reserve(probes.size());
    if (replicate_values) replicate_values->assign(probes.size(), {});
    std::vector<double> integrals(cfg.n_bridges);
    std::vector<double> mean_g(nodes);
    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        const double alpha = probes[pi].alpha;
        const double lambda = probes[pi].lambda;
        TransformEstimate est;
        est.gamma = gamma;
        est.alpha = alpha;
        est.lambda = lambda;
        est.x = x;
        est.y = y;
        est.n_bridges = cfg.n_bridges;
        est.t_low = cfg.t_low;
        est.t_high = t_high;
        est.seed = cfg.seed;
        std::fill(mean_g.begin(), mean_g.end(), 0.0);

        if (alpha > 0.0) {
            for (std::size_t r = 0; r < cfg.n_bridges; ++r) {
                double acc = 0.0;
                for (std::size_t j = 0; j < nodes; ++j) {
                    const double g = detail::g_of_f(table.f(r, j), alpha, lambda);
                    mean_g[j] += g;
                    acc += node_w[j] * g;
                }
                if (diagonal)  // analytic t^{alpha-1} tail below the cutoff
                    acc += detail::g_of_f(table.f(r, 0), alpha, lambda) /
                           (2.0 * M_PI * alpha);
                integrals[r] = acc;
            }
            const MeanStderr ms = mean_stderr(integrals);
            double tail_mean = 0.0;
            for (std::size_t j = 0; j < nodes; ++j) mean_g[j] /= static_cast<double>(cfg.n_bridges);
            if (diagonal) tail_mean = mean_g[0] / (2.0 * M_PI * alpha);
            // Richardson half-grid difference on the mean curve
            double full = 0.0, half = 0.0;
            for (std::size_t j = 0; j < nodes; ++j) full += node_w[j] * mean_g[j];
            {
                std::size_t last = 0;
                for (std::size_t j = 0; j < nodes; j += 2) last = j;
                for (std::size_t j = 0; j < nodes; j += 2) {
                    const double w = (j == 0 || j == last) ? grid.h : 2.0 * grid.h;
                    half += w * std::exp(-d * d / (2.0 * grid.t[j])) / (2.0 * M_PI) * mean_g[j];
                }
                if (last + 1 < nodes)  // odd tail panel at full resolution
                    half += 0.5 * grid.h *
                            (std::exp(-d * d / (2.0 * grid.t[last])) / (2.0 * M_PI) * mean_g[last] +
                             std::exp(-d * d / (2.0 * grid.t[nodes - 1])) / (2.0 * M_PI) *
                                 mean_g[nodes - 1]);
            }
            const double quad_err = std::fabs(full - half);
            est.value = ms.mean;
            est.stderr_ = std::sqrt(ms.stderr_ * ms.stderr_ + quad_err * quad_err +
                                    0.01 * tail_mean * tail_mean);
            if (replicate_values) (*replicate_values)[pi] = integrals;
            out.push_back(est);
            continue;
        }

        // alpha = 0: suffix integrals over the refinement ladder
        const std::size_t levels = anchors.size();
        std::vector<std::vector<double>> suffix(levels,
                                                std::vector<double>(cfg.n_bridges, 0.0));
        for (std::size_t r = 0; r < cfg.n_bridges; ++r) {
            double acc = 0.0;
            std::size_t ai = 0;  // anchors in descending node-index order
            for (std::size_t jj = nodes; jj-- > 0;) {
                const double g = detail::g_of_f(table.f(r, jj), 0.0, lambda);
                // left edge of a suffix gets half weight; interior full
                const double w = (jj + 1 == nodes) ? 0.5 * grid.h : grid.h;
                acc += w * std::exp(-d * d / (2.0 * grid.t[jj])) / (2.0 * M_PI) * g;
                while (ai < levels && anchors[ai] == jj) {
                    const double edge = 0.5 * grid.h *
                                        std::exp(-d * d / (2.0 * grid.t[jj])) / (2.0 * M_PI) * g;
                    suffix[ai][r] = acc - edge;  // correct trapezoid left edge
                    ++ai;
                }
            }
        }
        std::vector<double> v_mean(levels), v_se(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            const MeanStderr ms = mean_stderr(suffix[l]);
            v_mean[l] = ms.mean;
            v_se[l] = ms.stderr_;
        }
        // growth from coarsest to finest cutoff, replicate-paired
        std::vector<double> diff(cfg.n_bridges);
        for (std::size_t r = 0; r < cfg.n_bridges; ++r)
            diff[r] = suffix[levels - 1][r] - suffix[0][r];
        const MeanStderr growth = mean_stderr(diff);
        est.value = v_mean[levels - 1];
        est.stderr_ = v_se[levels - 1];
        if (replicate_values) (*replicate_values)[pi] = suffix[levels - 1];
        const double scale = std::max(std::fabs(v_mean[levels - 1]), 1e-300);
        if (levels < 2 || growth.mean <= 3.0 * growth.stderr_ + 1e-9 * scale) {
            est.divergent = false;
        } else {
            std::vector<double> xs, ys;
            for (std::size_t l = 0; l < levels; ++l) {
                xs.push_back(-std::log(cfg.t_low * std::pow(10.0, static_cast<double>(
                                                                      levels - 1 - l))));
                ys.push_back(v_mean[l]);
            }
            const LineFit fit = fit_line(xs, ys);
            if (fit.r2 >= cfg.divergence_r2) {
                est.divergent = true;
                est.log_coeff = fit.slope;
                est.log_r2 = fit.r2;
            } else {
                std::ostringstream msg;
                msg << "transform: alpha=0 refinement neither convergent nor log-divergent "
                       "(r2="
                    << fit.r2 << "); table t_low:value =";
                for (std::size_t l = 0; l < levels; ++l)
                    msg << ' ' << cfg.t_low * std::pow(10.0, static_cast<double>(levels - 1 - l))
                        << ':' << v_mean[l];
                throw std::runtime_error(msg.str());
            }
        }
        out.push_back(est);
    }
    return out;
}

inline TransformEstimate integral_transform(Point2 x, Point2 y, double gamma, double alpha,
                                            double lambda, const TransformConfig& cfg,
                                            const FieldProvider& provider) {
    return transform_batch(x, y, gamma, {{alpha, lambda}}, cfg, provider).front();
}

struct SpectralDimensionFit {
    double d_s = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::vector<TransformEstimate> per_lambda;
};

// d_S from the Laplace probe: I_alpha(lambda) ~ lambda^{d_S/2 - 1 - alpha},
// fitted over the given lambdas with shared draws, d_S = 2 (1 + alpha + slope).
inline SpectralDimensionFit spectral_dimension_estimate(Point2 x, double gamma, double alpha,
                                                        const std::vector<double>& lambdas,
                                                        const TransformConfig& cfg,
                                                        const FieldProvider& provider) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("spectral_dimension_estimate: alpha > 0 required");
    if (lambdas.size() < 4)
        throw std::invalid_argument("spectral_dimension_estimate: need >= 4 lambdas");
    const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
    if (*hi / *lo < 10.0)
        throw std::invalid_argument("spectral_dimension_estimate: lambdas must span >= a decade");
    std::vector<TransformProbe> probes;
    for (double l : lambdas) probes.push_back({alpha, l});
    SpectralDimensionFit fit;
    fit.per_lambda = transform_batch(x, x, gamma, probes, cfg, provider);
    std::vector<double> lx, ly;
    for (const auto& est : fit.per_lambda) {
        if (!(est.value > 0.0) || !std::isfinite(est.value))
            throw std::runtime_error("spectral_dimension_estimate: non-finite transform value");
        lx.push_back(std::log(est.lambda));
        ly.push_back(std::log(est.value));
    }
    const LineFit line = fit_line(lx, ly);
    fit.slope = line.slope;
    fit.intercept = line.intercept;
    fit.r2 = line.r2;
    fit.d_s = 2.0 * (1.0 + alpha + line.slope);
    return fit;
}

// ---------------------------------------------------------------------------
// Reflection coupling
// ---------------------------------------------------------------------------

struct CoupledPaths {
    Point2 y0, y;
    double tau1 = std::numeric_limits<double>::infinity();
    double tau2 = std::numeric_limits<double>::infinity();
    double tau = std::numeric_limits<double>::infinity();  // max(tau1, tau2)
    std::vector<double> times;
    std::vector<Point2> path_y0;   // B^{y0}
    std::vector<Point2> path_y;    // B^{y} = y + B, independent driver
    std::vector<Point2> path_bar;  // spliced: coordinate i follows B^{y0} until tau_i
};

// Couples B^{y0} and B^y with independent drivers: coordinate i of the spliced
// path switches to B^y at the first sign change of the coordinate difference
// (crossing time linearly interpolated). No meeting by the horizon leaves the
// coupling time at +infinity.
inline CoupledPaths couple_paths(Point2 y0, Point2 y, double horizon, std::size_t n_steps,
                                 std::uint64_t seed) {
    if (!(horizon > 0.0)) throw std::invalid_argument("couple_paths: horizon must be > 0");
    if (n_steps < 2) throw std::invalid_argument("couple_paths: n_steps >= 2 required");
    CoupledPaths cp;
    cp.y0 = y0;
    cp.y = y;
    const double dt = horizon / static_cast<double>(n_steps);
    const double sd = std::sqrt(dt);
    Rng rng(seed);
    cp.times.resize(n_steps + 1);
    cp.path_y0.resize(n_steps + 1);
    cp.path_y.resize(n_steps + 1);
    cp.path_bar.resize(n_steps + 1);
    cp.path_y0[0] = y0;
    cp.path_y[0] = y;
    cp.times[0] = 0.0;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        cp.times[k] = static_cast<double>(k) * dt;
        cp.path_y0[k] = {cp.path_y0[k - 1].x + sd * rng.normal(),
                         cp.path_y0[k - 1].y + sd * rng.normal()};
        cp.path_y[k] = {cp.path_y[k - 1].x + sd * rng.normal(),
                        cp.path_y[k - 1].y + sd * rng.normal()};
    }
    // per-coordinate first sign change of the difference process
    std::size_t switch_idx[2] = {n_steps + 1, n_steps + 1};
    double taus[2] = {std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
    for (int ci = 0; ci < 2; ++ci) {
        auto coord = [ci](const Point2& p) { return ci == 0 ? p.x : p.y; };
        const double d0 = coord(y0) - coord(y);
        if (d0 == 0.0) {
            taus[ci] = 0.0;
            switch_idx[ci] = 0;
            continue;
        }
        double prev = d0;
        for (std::size_t k = 1; k <= n_steps; ++k) {
            const double cur = coord(cp.path_y0[k]) - coord(cp.path_y[k]);
            if (cur == 0.0 || (cur > 0.0) != (prev > 0.0)) {
                taus[ci] = cp.times[k - 1] +
                           dt * std::fabs(prev) / (std::fabs(prev) + std::fabs(cur));
                switch_idx[ci] = k;
                break;
            }
            prev = cur;
        }
    }
    cp.tau1 = taus[0];
    cp.tau2 = taus[1];
    cp.tau = std::max(cp.tau1, cp.tau2);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        cp.path_bar[k] = {k >= switch_idx[0] ? cp.path_y[k].x : cp.path_y0[k].x,
                          k >= switch_idx[1] ? cp.path_y[k].y : cp.path_y0[k].y};
    }
    return cp;
}

// ---------------------------------------------------------------------------
// Direct-LBM side of the transform identity (oracle for acceptance)
// ---------------------------------------------------------------------------

struct Box2 {
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
    bool contains(const Point2& p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
};

struct MonteCarloEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

// E^x[ int G(F(x,t)) 1_{B_t in A} F(x,dt) ] with G(u) = u^alpha e^{-lambda u},
// simulated directly on one fixed field.
inline MonteCarloEstimate lbm_occupation_transform(Point2 x, const Box2& box, double gamma,
                                                   double alpha, double lambda,
                                                   const FieldAccess& access, double horizon,
                                                   std::size_t n_paths, std::uint64_t seed,
                                                   unsigned workers) {
    if (!(horizon > 0.0)) throw std::invalid_argument("lbm_occupation_transform: horizon > 0");
    const double dt = 0.25 * access.eps() * access.eps();
    detail::check_clock_preconditions(gamma, dt, access);
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / dt));
    std::vector<double> vals(n_paths);
    parallel_for(n_paths, workers, [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        const double sd = std::sqrt(dt);
        std::vector<Point2> pos(n_steps + 1);
        pos[0] = x;
        for (std::size_t k = 1; k <= n_steps; ++k)
            pos[k] = {pos[k - 1].x + sd * rng.normal(), pos[k - 1].y + sd * rng.normal()};
        std::vector<double> xv(n_steps + 1);
        access.values_at(pos, xv);
        const double shift = 0.5 * gamma * gamma * access.sigma2();
        double f = 0.0, acc = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double w = std::exp(gamma * xv[k] - shift);
            if (box.contains(pos[k])) acc += detail::g_of_f(f, alpha, lambda) * w * dt;
            f += w * dt;
        }
        vals[r] = acc;
    });
    const MeanStderr ms = mean_stderr(vals);
    return {ms.mean, ms.stderr_, n_paths};
}

}  // namespace lqg
