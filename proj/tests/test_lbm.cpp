#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "lqg/lbm.hpp"
#include "lqg/parallel.hpp"
#include "lqg/stats.hpp"

using namespace lqg;

namespace {

std::shared_ptr<const FieldSample> shared_field(std::uint64_t seed, double eps = 0.4) {
    const GridSpec grid{2, -6.0, -6.0, 12.0, 128};
    const CovarianceSpec spec{2, 1.0, eps};
    return std::make_shared<FieldSample>(sample_field_grid(grid, spec, seed));
}

}  // namespace

TEST_CASE("sample_walk: start pinned, increment law, coordinate independence") {
    const Point2 start{0.5, -0.25};
    const std::size_t n_paths = 10000, n_steps = 16;
    const double horizon = 1.0, dt = horizon / n_steps;
    std::vector<double> incs_x, incs_y;
    double cross = 0.0;
    std::size_t cross_n = 0;
    for (std::size_t r = 0; r < n_paths; ++r) {
        const WalkPath p = sample_walk(start, horizon, n_steps, derive_seed(3, r));
        REQUIRE(p.positions.front().x == start.x);
        REQUIRE(p.positions.front().y == start.y);
        if (r < 2000) {
            for (std::size_t k = 1; k <= n_steps; ++k) {
                incs_x.push_back(p.positions[k].x - p.positions[k - 1].x);
                incs_y.push_back(p.positions[k].y - p.positions[k - 1].y);
            }
        }
        cross += (p.positions.back().x - start.x) * (p.positions.back().y - start.y);
        ++cross_n;
    }
    const MeanStderr mx = mean_stderr(incs_x), my = mean_stderr(incs_y);
    CHECK(std::fabs(mx.mean) <= 3.0 * mx.stderr_);
    CHECK(std::fabs(my.mean) <= 3.0 * my.stderr_);
    double vx = 0, vy = 0;
    for (double v : incs_x) vx += v * v;
    for (double v : incs_y) vy += v * v;
    vx /= static_cast<double>(incs_x.size());
    vy /= static_cast<double>(incs_y.size());
    // var of the variance estimator of N(0, dt): 2 dt^2 / n
    const double se_var = std::sqrt(2.0 / static_cast<double>(incs_x.size())) * dt;
    CHECK(std::fabs(vx - dt) <= 3.0 * se_var);
    CHECK(std::fabs(vy - dt) <= 3.0 * se_var);
    const double rho = cross / (static_cast<double>(cross_n) * horizon);
    CHECK(std::fabs(rho) < 3.0 / std::sqrt(static_cast<double>(cross_n)));
    // determinism
    const WalkPath a = sample_walk(start, 1.0, 64, 42);
    const WalkPath b = sample_walk(start, 1.0, 64, 42);
    CHECK(a.positions[64].x == b.positions[64].x);
    CHECK_THROWS_AS(sample_walk(start, 1.0, 1, 1), std::invalid_argument);
}

TEST_CASE("clock: gamma 0 identity, unit expectation, strict growth, additivity") {
    auto field = shared_field(10);
    const GridFieldAccess access(field);
    const WalkPath path = sample_walk({0, 0}, 1.0, 32, 7);
    SECTION("gamma = 0 gives F(t) = t at grid times") {
        const Clock c = clock(path, 0.0, access);
        for (std::size_t k = 0; k < c.times.size(); ++k) CHECK(c.values[k] == c.times[k]);
    }
    SECTION("unit expectation over field replicates at a fixed path") {
        const CovarianceSpec spec{2, 1.0, 0.4};
        std::vector<double> totals(200);
        parallel_for(200, 2, [&](std::size_t r) {
            const ExactFieldAccess exact(spec, derive_seed(11, r));
            totals[r] = clock(path, 1.0, exact).total();
        });
        const MeanStderr ms = mean_stderr(totals);
        INFO("mean clock " << ms.mean << " +- " << ms.stderr_);
        CHECK(std::fabs(ms.mean - 1.0) <= 3.0 * ms.stderr_);
    }
    SECTION("strictly increasing and additive by summation") {
        const Clock c = clock(path, 1.0, access);
        for (std::size_t k = 1; k < c.values.size(); ++k) CHECK(c.values[k] > c.values[k - 1]);
        // resuming the accumulation from an interior knot reproduces the total
        double resume = c.values[10];
        for (std::size_t k = 11; k < c.values.size(); ++k)
            resume += c.values[k] - c.values[k - 1];
        CHECK(resume == Catch::Approx(c.total()).epsilon(1e-12));
    }
    SECTION("unresolved cutoff rejected") {
        const WalkPath coarse = sample_walk({0, 0}, 10.0, 8, 7);  // dt = 1.25
        CHECK_THROWS_AS(clock(coarse, 1.0, access), std::invalid_argument);
        CHECK_NOTHROW(clock(coarse, 0.0, access));  // no field dependence at gamma 0
    }
}

TEST_CASE("grid and exact field backends give matching clock medians") {
    const CovarianceSpec spec{2, 1.0, 0.4};
    const GridSpec grid{2, -6.0, -6.0, 12.0, 128};
    CirculantSampler sampler = make_grid_sampler(grid, spec);
    const std::size_t reps = 100;
    std::vector<double> f_grid(reps), f_exact(reps);
    parallel_for(reps, 2, [&](std::size_t r) {
        const WalkPath path = sample_walk({0, 0}, 1.0, 32, derive_seed(21, r));  // shared path
        auto gf = std::make_shared<FieldSample>(sampler.sample(derive_seed(22, r)));
        f_grid[r] = clock(path, 1.0, GridFieldAccess(gf)).total();
        f_exact[r] = clock(path, 1.0, ExactFieldAccess(spec, derive_seed(23, r))).total();
    });
    const double mg = median(f_grid), me = median(f_exact);
    INFO("grid median " << mg << " exact median " << me);
    CHECK(std::fabs(mg - me) / me < 0.05);
}

TEST_CASE("clock_inverse: identity at gamma 0, round trip, range error") {
    auto field = shared_field(12);
    const GridFieldAccess access(field);
    const WalkPath path = sample_walk({0, 0}, 2.0, 64, 9);
    const Clock c0 = clock(path, 0.0, access);
    for (double s : {0.0, 0.5, 1.0, 1.99}) CHECK(clock_inverse(c0, s) == Catch::Approx(s));
    const Clock c1 = clock(path, 1.0, access);
    for (std::size_t k = 0; k < c1.values.size(); ++k)
        CHECK(std::fabs(clock_inverse(c1, c1.values[k]) - c1.times[k]) <=
              c1.times[1] - c1.times[0] + 1e-12);
    CHECK_THROWS_AS(clock_inverse(c1, c1.total() * 1.01), RangeError);
}

TEST_CASE("lbm_position: gamma 0 law is N(start, t I); continuity at small t") {
    auto field = shared_field(13);
    const GridFieldAccess access(field);
    const Point2 start{0.25, -0.5};
    const double t = 0.5;
    const std::size_t n = 10000;
    std::vector<double> xs(n), ys(n);
    parallel_for(n, 2, [&](std::size_t r) {
        const Point2 p = lbm_position(start, t, 0.0, access, derive_seed(31, r));
        xs[r] = p.x;
        ys[r] = p.y;
    });
    const double sd = std::sqrt(t);
    const double dx = ks_statistic(xs, [&](double v) { return normal_cdf((v - start.x) / sd); });
    const double dy = ks_statistic(ys, [&](double v) { return normal_cdf((v - start.y) / sd); });
    const double crit = ks_critical(0.01, n);
    CHECK(dx < crit);
    CHECK(dy < crit);

    double prev_med = 1e9;
    for (double tt : {0.2, 0.02, 0.002}) {
        std::vector<double> disp(400);
        parallel_for(400, 2, [&](std::size_t r) {
            const Point2 p = lbm_position(start, tt, 1.0, access, derive_seed(33, r));
            disp[r] = std::hypot(p.x - start.x, p.y - start.y);
        });
        const double med = median(disp);
        CHECK(med < prev_med);
        prev_med = med;
    }
    CHECK(prev_med < 0.05);
}

TEST_CASE("lbm_position: horizon exhaustion reports attained clock") {
    auto field = shared_field(14);
    const GridFieldAccess access(field);
    LbmOptions opts;
    opts.horizon = 0.25;
    opts.max_doublings = 0;
    CHECK_THROWS_WITH(lbm_position({0, 0}, 5.0, 0.0, access, 1, opts),
                      Catch::Matchers::ContainsSubstring("horizon exhausted"));
}
