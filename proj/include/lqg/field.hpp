#pragma once

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lqg/covariance.hpp"
#include "lqg/errors.hpp"
#include "lqg/grid.hpp"
#include "lqg/parallel.hpp"
#include "lqg/rng.hpp"

namespace lqg {

static_assert(std::endian::native == std::endian::little,
              "field serialization assumes a little-endian host");

// One realization of the cutoff field X_eps at the cell centers of a grid.
struct FieldSample {
    GridSpec grid;
    CovarianceSpec spec;
    std::vector<double> values;   // one per cell, row-major in 2d
    double sigma2 = 0.0;          // E[X_eps^2] = cutoff_covariance(0, spec)
    std::uint64_t seed = 0;
    double clipped_mass = 0.0;    // relative embedding spectrum mass clipped to 0

    double value_at(std::size_t i) const { return values[i]; }

    // Linear (1d) / bilinear (2d) interpolation of cell-center values.
    // Constant extrapolation inside the outer half-cell margin.
    double interpolate(double x) const {
        if (!grid.contains(x))
            throw RangeError("field interpolation outside grid", grid.origin_x,
                             grid.origin_x + grid.extent, x);
        const double h = grid.cell_size();
        double u = (x - grid.origin_x) / h - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(grid.resolution - 1));
        const auto i0 = static_cast<std::size_t>(u);
        const std::size_t i1 = std::min(i0 + 1, grid.resolution - 1);
        const double w = u - static_cast<double>(i0);
        return (1.0 - w) * values[i0] + w * values[i1];
    }

    double interpolate(const Point2& p) const {
        if (!grid.contains(p))
            throw RangeError("field interpolation outside grid", grid.origin_x,
                             grid.origin_x + grid.extent, std::abs(p.x) > std::abs(p.y) ? p.x : p.y);
        const double h = grid.cell_size();
        const double nmax = static_cast<double>(grid.resolution - 1);
        double u = std::clamp((p.x - grid.origin_x) / h - 0.5, 0.0, nmax);
        double v = std::clamp((p.y - grid.origin_y) / h - 0.5, 0.0, nmax);
        const auto ix = static_cast<std::size_t>(u);
        const auto iy = static_cast<std::size_t>(v);
        const std::size_t jx = std::min(ix + 1, grid.resolution - 1);
        const std::size_t jy = std::min(iy + 1, grid.resolution - 1);
        const double wx = u - static_cast<double>(ix);
        const double wy = v - static_cast<double>(iy);
        const double f00 = values[grid.flat_index(ix, iy)];
        const double f10 = values[grid.flat_index(jx, iy)];
        const double f01 = values[grid.flat_index(ix, jy)];
        const double f11 = values[grid.flat_index(jx, jy)];
        return (1.0 - wy) * ((1.0 - wx) * f00 + wx * f10) +
               wy * ((1.0 - wx) * f01 + wx * f11);
    }
};

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    fftw_complex* data = nullptr;
    explicit FftwBuffer(std::size_t n) {
        data = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!data) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace detail

// Stationary Gaussian sampler on a grid: circulant embedding of the cutoff
// kernel on a 2x-padded torus. Setup (kernel row + eigenvalue FFT) happens
// once; sample() is cheap and usable concurrently from several threads.
class CirculantSampler {
public:
    // kernel(r): radial covariance to embed. sigma2 is stored on samples;
    // pass cutoff_covariance(0, spec) for plain fields, band values for
    // refinement increments.
    template <typename Kernel>
    CirculantSampler(GridSpec grid, CovarianceSpec spec, Kernel&& kernel, double sigma2,
                     unsigned workers = 1)
        : grid_(grid), spec_(spec), sigma2_(sigma2) {
        grid_.validate();
        spec_.validate();
        pad_ = 2 * grid_.resolution;
        const double h = grid_.cell_size();
        const std::size_t n_total = grid_.dimension == 1 ? pad_ : pad_ * pad_;
        std::vector<double> row(n_total);
        if (grid_.dimension == 1) {
            for (std::size_t j = 0; j < pad_; ++j) {
                const std::size_t lag = std::min(j, pad_ - j);
                row[j] = kernel(static_cast<double>(lag) * h);
            }
        } else {
            // Quarter-plane symmetry: value depends on folded |lag| per axis.
            const std::size_t half = pad_ / 2;
            std::vector<double> quarter((half + 1) * (half + 1));
            parallel_for(half + 1, workers, [&](std::size_t ly) {
                for (std::size_t lx = 0; lx <= half; ++lx) {
                    const double r = std::hypot(static_cast<double>(lx) * h,
                                                static_cast<double>(ly) * h);
                    quarter[ly * (half + 1) + lx] = kernel(r);
                }
            });
            for (std::size_t jy = 0; jy < pad_; ++jy) {
                const std::size_t ly = std::min(jy, pad_ - jy);
                for (std::size_t jx = 0; jx < pad_; ++jx) {
                    const std::size_t lx = std::min(jx, pad_ - jx);
                    row[jy * pad_ + jx] = quarter[ly * (half + 1) + lx];
                }
            }
        }
        // Eigenvalues of the torus covariance operator: unnormalized DFT of row.
        detail::FftwBuffer in(n_total), out(n_total);
        for (std::size_t i = 0; i < n_total; ++i) {
            in.data[i][0] = row[i];
            in.data[i][1] = 0.0;
        }
        {
            std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
            fftw_plan p = grid_.dimension == 1
                              ? fftw_plan_dft_1d(static_cast<int>(pad_), in.data, out.data,
                                                 FFTW_FORWARD, FFTW_ESTIMATE)
                              : fftw_plan_dft_2d(static_cast<int>(pad_), static_cast<int>(pad_),
                                                 in.data, out.data, FFTW_FORWARD, FFTW_ESTIMATE);
            fftw_execute(p);
            fftw_destroy_plan(p);
        }
        sqrt_eigen_.resize(n_total);
        double clipped = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n_total; ++i) {
            const double ev = out.data[i][0];
            total += std::fabs(ev);
            if (ev < 0.0) {
                clipped += -ev;
                sqrt_eigen_[i] = 0.0;
            } else {
                sqrt_eigen_[i] = std::sqrt(ev);
            }
        }
        clipped_mass_ = total > 0.0 ? clipped / total : 0.0;
        {
            std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
            plan_in_ = std::make_unique<detail::FftwBuffer>(n_total);
            plan_out_ = std::make_unique<detail::FftwBuffer>(n_total);
            backward_ = grid_.dimension == 1
                            ? fftw_plan_dft_1d(static_cast<int>(pad_), plan_in_->data,
                                               plan_out_->data, FFTW_BACKWARD, FFTW_ESTIMATE)
                            : fftw_plan_dft_2d(static_cast<int>(pad_), static_cast<int>(pad_),
                                               plan_in_->data, plan_out_->data, FFTW_BACKWARD,
                                               FFTW_ESTIMATE);
        }
    }

    ~CirculantSampler() {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        if (backward_) fftw_destroy_plan(backward_);
    }
    CirculantSampler(const CirculantSampler&) = delete;
    CirculantSampler& operator=(const CirculantSampler&) = delete;

    const GridSpec& grid() const { return grid_; }
    const CovarianceSpec& spec() const { return spec_; }
    double sigma2() const { return sigma2_; }
    double clipped_mass() const { return clipped_mass_; }

    FieldSample sample(std::uint64_t seed) const {
        FieldSample out;
        out.grid = grid_;
        out.spec = spec_;
        out.sigma2 = sigma2_;
        out.seed = seed;
        out.clipped_mass = clipped_mass_;
        out.values = raw_sample(seed);
        return out;
    }

    // The torus sample restricted to the physical grid (real part route).
    std::vector<double> raw_sample(std::uint64_t seed) const {
        const std::size_t n_total = sqrt_eigen_.size();
        detail::FftwBuffer in(n_total), out(n_total);
        Rng rng(seed);
        const double norm = 1.0 / std::sqrt(static_cast<double>(n_total));
        for (std::size_t i = 0; i < n_total; ++i) {
            in.data[i][0] = sqrt_eigen_[i] * rng.normal();
            in.data[i][1] = sqrt_eigen_[i] * rng.normal();
        }
        fftw_execute_dft(backward_, in.data, out.data);
        std::vector<double> values(grid_.cell_count());
        if (grid_.dimension == 1) {
            for (std::size_t i = 0; i < grid_.resolution; ++i)
                values[i] = out.data[i][0] * norm;
        } else {
            for (std::size_t iy = 0; iy < grid_.resolution; ++iy)
                for (std::size_t ix = 0; ix < grid_.resolution; ++ix)
                    values[grid_.flat_index(ix, iy)] = out.data[iy * pad_ + ix][0] * norm;
        }
        return values;
    }

private:
    GridSpec grid_;
    CovarianceSpec spec_;
    double sigma2_ = 0.0;
    std::size_t pad_ = 0;
    std::vector<double> sqrt_eigen_;
    double clipped_mass_ = 0.0;
    std::unique_ptr<detail::FftwBuffer> plan_in_, plan_out_;
    fftw_plan backward_ = nullptr;
};

inline CirculantSampler make_grid_sampler(const GridSpec& grid, const CovarianceSpec& spec,
                                          unsigned workers = 1) {
    grid.validate();
    spec.validate();
    if (!(spec.eps > 0.0))
        throw std::invalid_argument("sample_field_grid: cutoff eps must be > 0");
    if (spec.eps < 0.5 * grid.cell_size())
        throw std::invalid_argument(
            "sample_field_grid: cutoff not resolvable, need eps >= cell_size/2");
    if (grid.dimension != spec.dimension)
        throw std::invalid_argument("sample_field_grid: grid/spec dimension mismatch");
    const double s2 = cutoff_covariance(0.0, spec);
    return CirculantSampler(grid, spec,
                            [spec](double r) { return cutoff_covariance(r, spec); }, s2,
                            workers);
}

inline FieldSample sample_field_grid(const GridSpec& grid, const CovarianceSpec& spec,
                                     std::uint64_t seed) {
    return make_grid_sampler(grid, spec).sample(seed);
}

// Refinement: X_{eps'} = X_eps + independent increment with kernel
// K_{eps'} - K_eps. Couples realizations across cutoff levels.
class RefinementSampler {
public:
    RefinementSampler(const GridSpec& grid, const CovarianceSpec& old_spec, double new_eps,
                      unsigned workers = 1)
        : inner_(make_refined(grid, old_spec, new_eps, workers)) {}

    FieldSample refine(const FieldSample& base, std::uint64_t seed) const {
        if (base.values.size() != inner_.grid().cell_count())
            throw std::invalid_argument("refine_field: grid mismatch");
        FieldSample out = inner_.sample(seed);
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += base.values[i];
        out.clipped_mass = std::max(out.clipped_mass, base.clipped_mass);
        return out;
    }

private:
    static CirculantSampler make_refined(const GridSpec& grid, const CovarianceSpec& old_spec,
                                         double new_eps, unsigned workers) {
        old_spec.validate();
        if (!(new_eps > 0.0) || !(new_eps < old_spec.eps))
            throw std::invalid_argument("refine_field: need 0 < new_eps < old eps");
        if (new_eps < 0.5 * grid.cell_size())
            throw std::invalid_argument("refine_field: new cutoff not resolvable on grid");
        CovarianceSpec ns = old_spec;
        ns.eps = new_eps;
        const double m = old_spec.mass, e0 = old_spec.eps;
        return CirculantSampler(
            grid, ns, [m, e0, new_eps](double r) { return covariance_band(r, m, e0, new_eps); },
            cutoff_covariance(0.0, ns), workers);
    }

    CirculantSampler inner_;
};

inline FieldSample refine_field(const FieldSample& base, double new_eps, std::uint64_t seed) {
    return RefinementSampler(base.grid, base.spec, new_eps).refine(base, seed);
}

namespace detail {

inline std::vector<double> mvn_sample(const Eigen::MatrixXd& cov, std::size_t n,
                                      std::uint64_t seed, double sigma2) {
    Eigen::MatrixXd k = cov;
    const double jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
    Eigen::LLT<Eigen::MatrixXd> llt;
    double used = 0.0;
    bool ok = false;
    for (double j : jitters) {
        k = cov;
        if (j > 0.0) k.diagonal().array() += j * sigma2;
        llt.compute(k);
        if (llt.info() == Eigen::Success) {
            used = j;
            ok = true;
            break;
        }
    }
    if (!ok)
        throw std::runtime_error(
            "sample_field_at_points: covariance not PSD after jitter up to 1e-8*sigma2");
    (void)used;
    Rng rng(seed);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) z[static_cast<Eigen::Index>(i)] = rng.normal();
    Eigen::VectorXd x = llt.matrixL() * z;
    return std::vector<double>(x.data(), x.data() + x.size());
}

template <typename PointT, typename DistFn, typename MapT>
std::vector<double> sample_points_impl(const std::vector<PointT>& points,
                                       const CovarianceSpec& spec, std::uint64_t seed,
                                       DistFn&& dist, MapT unique_map) {
    if (points.size() > 8192)
        throw std::invalid_argument("sample_field_at_points: at most 8192 points");
    if (!(spec.eps > 0.0))
        throw std::invalid_argument("sample_field_at_points: cutoff eps must be > 0");
    // Coincident points share one latent value: dedupe, factorize, scatter.
    std::vector<std::size_t> owner(points.size());
    std::vector<PointT> unique;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto [it, inserted] = unique_map.try_emplace(points[i], unique.size());
        if (inserted) unique.push_back(points[i]);
        owner[i] = it->second;
    }
    const std::size_t k = unique.size();
    Eigen::MatrixXd cov(k, k);
    const double s2 = cutoff_covariance(0.0, spec);
    for (std::size_t i = 0; i < k; ++i) {
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = s2;
        for (std::size_t j = i + 1; j < k; ++j) {
            const double c = cutoff_covariance(dist(unique[i], unique[j]), spec);
            cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
            cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
        }
    }
    const std::vector<double> latent = mvn_sample(cov, k, seed, s2);
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = latent[owner[i]];
    return out;
}

}  // namespace detail

// Exact multivariate Gaussian draw at explicit 1d points (dense factorization).
inline std::vector<double> sample_field_at_points(const std::vector<double>& points,
                                                  const CovarianceSpec& spec,
                                                  std::uint64_t seed) {
    return detail::sample_points_impl(
        points, spec, seed, [](double a, double b) { return std::fabs(a - b); },
        std::map<double, std::size_t>{});
}

// 2d overload.
inline std::vector<double> sample_field_at_points(const std::vector<Point2>& points,
                                                  const CovarianceSpec& spec,
                                                  std::uint64_t seed) {
    struct Less {
        bool operator()(const Point2& a, const Point2& b) const {
            return a.x != b.x ? a.x < b.x : a.y < b.y;
        }
    };
    return detail::sample_points_impl(
        points, spec, seed, [](const Point2& a, const Point2& b) { return distance(a, b); },
        std::map<Point2, std::size_t, Less>{});
}

// --- flat binary container (little-endian doubles, metadata header) ---

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

inline void write_field(std::ostream& os, const FieldSample& f) {
    os.write("LQGF\1\n", 6);
    detail::write_pod(os, static_cast<std::int32_t>(f.grid.dimension));
    detail::write_pod(os, static_cast<std::uint64_t>(f.grid.resolution));
    detail::write_pod(os, f.grid.origin_x);
    detail::write_pod(os, f.grid.origin_y);
    detail::write_pod(os, f.grid.extent);
    detail::write_pod(os, f.spec.mass);
    detail::write_pod(os, f.spec.eps);
    detail::write_pod(os, f.sigma2);
    detail::write_pod(os, f.seed);
    detail::write_pod(os, f.clipped_mass);
    detail::write_pod(os, static_cast<std::uint64_t>(f.values.size()));
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

inline FieldSample read_field(std::istream& is) {
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, "LQGF\1\n", 6) != 0)
        throw std::runtime_error("read_field: bad magic");
    FieldSample f;
    std::int32_t dim = 0;
    std::uint64_t res = 0, count = 0;
    detail::read_pod(is, dim);
    detail::read_pod(is, res);
    detail::read_pod(is, f.grid.origin_x);
    detail::read_pod(is, f.grid.origin_y);
    detail::read_pod(is, f.grid.extent);
    detail::read_pod(is, f.spec.mass);
    detail::read_pod(is, f.spec.eps);
    detail::read_pod(is, f.sigma2);
    detail::read_pod(is, f.seed);
    detail::read_pod(is, f.clipped_mass);
    detail::read_pod(is, count);
    f.grid.dimension = dim;
    f.grid.resolution = res;
    f.spec.dimension = dim;
    f.values.resize(count);
    is.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("read_field: truncated stream");
    return f;
}

inline void save_field(const std::string& path, const FieldSample& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_field: cannot open " + path);
    write_field(os, f);
}

inline FieldSample load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_field: cannot open " + path);
    return read_field(is);
}

}  // namespace lqg
