#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "lqg/field.hpp"
#include "lqg/stats.hpp"

using namespace lqg;

namespace {

const GridSpec kGrid1d{1, -8.0, 0.0, 16.0, 256};
const CovarianceSpec kSpec1d{1, 1.0, 0.1};

}  // namespace

TEST_CASE("grid sampler is deterministic in (grid, spec, seed)") {
    const FieldSample a = sample_field_grid(kGrid1d, kSpec1d, 42);
    const FieldSample b = sample_field_grid(kGrid1d, kSpec1d, 42);
    REQUIRE(a.values.size() == 256);
    CHECK(a.values == b.values);
    const FieldSample c = sample_field_grid(kGrid1d, kSpec1d, 43);
    CHECK(a.values != c.values);
}

TEST_CASE("sigma2 equals cutoff_covariance(0) bit-for-bit") {
    const FieldSample f = sample_field_grid(kGrid1d, kSpec1d, 7);
    CHECK(f.sigma2 == cutoff_covariance(0.0, kSpec1d));
}

TEST_CASE("grid sampler preconditions") {
    CovarianceSpec too_fine{1, 1.0, 0.01};  // below cell/2 = 0.03125
    CHECK_THROWS_AS(sample_field_grid(kGrid1d, too_fine, 1), std::invalid_argument);
    CovarianceSpec no_cutoff{1, 1.0, 0.0};
    CHECK_THROWS_AS(sample_field_grid(kGrid1d, no_cutoff, 1), std::invalid_argument);
    CovarianceSpec wrong_dim{2, 1.0, 0.1};
    CHECK_THROWS_AS(sample_field_grid(kGrid1d, wrong_dim, 1), std::invalid_argument);
}

TEST_CASE("empirical variance and lag covariances match the kernel oracle") {
    const std::size_t reps = 200;
    CirculantSampler sampler = make_grid_sampler(kGrid1d, kSpec1d);
    INFO("clipped embedding mass " << sampler.clipped_mass());
    CHECK(sampler.clipped_mass() < 1e-6);
    const std::size_t n = kGrid1d.resolution;
    const std::vector<std::size_t> lags{0, 1, 4, 16};
    std::vector<std::vector<double>> per_rep(lags.size());
    for (std::size_t r = 0; r < reps; ++r) {
        const FieldSample f = sampler.sample(derive_seed(11, r));
        for (std::size_t li = 0; li < lags.size(); ++li) {
            const std::size_t k = lags[li];
            double acc = 0.0;
            for (std::size_t i = 0; i + k < n; ++i) acc += f.values[i] * f.values[i + k];
            per_rep[li].push_back(acc / static_cast<double>(n - k));
        }
    }
    for (std::size_t li = 0; li < lags.size(); ++li) {
        const MeanStderr ms = mean_stderr(per_rep[li]);
        const double target = cutoff_covariance(static_cast<double>(lags[li]) * kGrid1d.cell_size(),
                                                kSpec1d);
        INFO("lag " << lags[li] << ": " << ms.mean << " vs " << target << " +- " << ms.stderr_);
        CHECK(std::fabs(ms.mean - target) <= 3.0 * ms.stderr_);
    }
}

TEST_CASE("2d sampler stationarity at short lags") {
    const GridSpec grid{2, -4.0, -4.0, 8.0, 64};
    const CovarianceSpec spec{2, 1.0, 0.3};
    CirculantSampler sampler = make_grid_sampler(grid, spec);
    const std::size_t reps = 150, n = 64;
    std::vector<double> var_r, covx_r, covy_r;
    for (std::size_t r = 0; r < reps; ++r) {
        const FieldSample f = sampler.sample(derive_seed(5, r));
        double v = 0, cx = 0, cy = 0;
        for (std::size_t iy = 0; iy + 1 < n; ++iy)
            for (std::size_t ix = 0; ix + 1 < n; ++ix) {
                const double c = f.values[f.grid.flat_index(ix, iy)];
                v += c * c;
                cx += c * f.values[f.grid.flat_index(ix + 1, iy)];
                cy += c * f.values[f.grid.flat_index(ix, iy + 1)];
            }
        const double cnt = static_cast<double>((n - 1) * (n - 1));
        var_r.push_back(v / cnt);
        covx_r.push_back(cx / cnt);
        covy_r.push_back(cy / cnt);
    }
    const double k0 = cutoff_covariance(0.0, spec);
    const double k1 = cutoff_covariance(grid.cell_size(), spec);
    const MeanStderr v = mean_stderr(var_r), cx = mean_stderr(covx_r), cy = mean_stderr(covy_r);
    CHECK(std::fabs(v.mean - k0) <= 3.0 * v.stderr_);
    CHECK(std::fabs(cx.mean - k1) <= 3.0 * cx.stderr_);
    CHECK(std::fabs(cy.mean - k1) <= 3.0 * cy.stderr_);
}

TEST_CASE("point sampler: coincident points, variance, decorrelation") {
    const CovarianceSpec spec{1, 1.0, 0.1};
    {
        const std::vector<double> pts{0.3, 0.3};
        const std::vector<double> v = sample_field_at_points(pts, spec, 99);
        REQUIRE(v.size() == 2);
        CHECK(v[0] == v[1]);
    }
    const double s2 = cutoff_covariance(0.0, spec);
    {
        std::vector<double> sq;
        for (std::size_t r = 0; r < 500; ++r) {
            const std::vector<double> v =
                sample_field_at_points(std::vector<double>{0.0}, spec, derive_seed(3, r));
            sq.push_back(v[0] * v[0]);
        }
        const MeanStderr ms = mean_stderr(sq);
        CHECK(std::fabs(ms.mean - s2) <= 3.0 * ms.stderr_);
    }
    {
        double s11 = 0, s22 = 0, s12 = 0;
        for (std::size_t r = 0; r < 500; ++r) {
            const std::vector<double> v =
                sample_field_at_points(std::vector<double>{0.0, 10.0}, spec, derive_seed(4, r));
            s11 += v[0] * v[0];
            s22 += v[1] * v[1];
            s12 += v[0] * v[1];
        }
        const double rho = s12 / std::sqrt(s11 * s22);
        const double target = cutoff_covariance(10.0, spec) / s2;
        CHECK(std::fabs(rho - target) < 3.0 / std::sqrt(500.0) + 0.01);
    }
    {
        std::vector<Point2> too_many(8193, Point2{0, 0});
        CHECK_THROWS_AS(sample_field_at_points(too_many, CovarianceSpec{2, 1.0, 0.1}, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("grid and point samplers agree in law (KS on a projection)") {
    const std::size_t reps = 500;
    CirculantSampler sampler = make_grid_sampler(kGrid1d, kSpec1d);
    const std::size_t idx[3] = {64, 128, 192};
    const std::vector<double> pts{kGrid1d.center_x(idx[0]), kGrid1d.center_x(idx[1]),
                                  kGrid1d.center_x(idx[2])};
    std::vector<double> proj_grid, proj_pts;
    const double w = 1.0 / std::sqrt(3.0);
    for (std::size_t r = 0; r < reps; ++r) {
        const FieldSample f = sampler.sample(derive_seed(21, r));
        proj_grid.push_back(w * (f.values[idx[0]] + f.values[idx[1]] + f.values[idx[2]]));
        const std::vector<double> v = sample_field_at_points(pts, kSpec1d, derive_seed(22, r));
        proj_pts.push_back(w * (v[0] + v[1] + v[2]));
    }
    const double d = ks_two_sample(proj_grid, proj_pts);
    CHECK(d < ks_critical_two_sample(0.01, reps, reps));
}

TEST_CASE("refinement couples cutoffs: variances add, sigma2 exact") {
    const CovarianceSpec coarse{1, 1.0, 0.4};
    const GridSpec grid{1, -8.0, 0.0, 16.0, 256};
    CirculantSampler sampler = make_grid_sampler(grid, coarse);
    RefinementSampler refiner(grid, coarse, 0.1);
    CovarianceSpec fine = coarse;
    fine.eps = 0.1;
    std::vector<double> incr_sq;
    for (std::size_t r = 0; r < 100; ++r) {
        const FieldSample base = sampler.sample(derive_seed(31, r));
        const FieldSample refined = refiner.refine(base, derive_seed(32, r));
        CHECK(refined.sigma2 == cutoff_covariance(0.0, fine));
        double acc = 0.0;
        for (std::size_t i = 0; i < base.values.size(); ++i) {
            const double d = refined.values[i] - base.values[i];
            acc += d * d;
        }
        incr_sq.push_back(acc / static_cast<double>(base.values.size()));
    }
    const MeanStderr ms = mean_stderr(incr_sq);
    const double band0 = covariance_band(0.0, 1.0, 0.4, 0.1);
    CHECK(std::fabs(ms.mean - band0) <= 3.0 * ms.stderr_);
}

TEST_CASE("binary container round-trips bit-exactly") {
    const FieldSample f = sample_field_grid(kGrid1d, kSpec1d, 1234);
    std::stringstream ss;
    write_field(ss, f);
    const FieldSample g = read_field(ss);
    CHECK(g.values == f.values);
    CHECK(g.sigma2 == f.sigma2);
    CHECK(g.seed == f.seed);
    CHECK(g.grid.resolution == f.grid.resolution);
    CHECK(g.grid.origin_x == f.grid.origin_x);
    CHECK(g.spec.eps == f.spec.eps);
}

TEST_CASE("interpolation matches cell centers and rejects exterior points") {
    const FieldSample f = sample_field_grid(kGrid1d, kSpec1d, 5);
    for (std::size_t i : {std::size_t{0}, std::size_t{100}, std::size_t{255}})
        CHECK(f.interpolate(f.grid.center_x(i)) == f.values[i]);
    CHECK_THROWS_AS(f.interpolate(-8.01), RangeError);
    const GridSpec g2{2, -4.0, -4.0, 8.0, 64};
    const CovarianceSpec s2{2, 1.0, 0.3};
    const FieldSample f2 = sample_field_grid(g2, s2, 6);
    CHECK(f2.interpolate(Point2{f2.grid.center_x(3), f2.grid.center_y(9)}) ==
          f2.values[f2.grid.flat_index(3, 9)]);
    CHECK_THROWS_AS(f2.interpolate(Point2{4.5, 0.0}), RangeError);
}
