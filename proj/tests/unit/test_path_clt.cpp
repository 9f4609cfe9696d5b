#include <doctest.h>

#include <cmath>
#include <random>

#include "dh/environment.hpp"
#include "dh/errors.hpp"
#include "dh/path_clt.hpp"
#include "dh/rng.hpp"
#include "dh/stats.hpp"

using namespace dh;

namespace {

std::vector<DriftPath> make_paths(const BbarSpec& spec, int count, double eps, double T, double series_dt) {
    std::vector<DriftPath> out;
    for (int p = 0; p < count; ++p) {
        auto s = bbar_series(spec, 2, T / (eps * eps) + series_dt, series_dt, derive_seed(99, "test-path", static_cast<std::uint64_t>(p)));
        out.push_back(integrate_path(s, eps, T, eps * eps * series_dt));
    }
    return out;
}

}  // namespace

TEST_SUITE("path_clt") {
    TEST_CASE("path integration is exact for piecewise constant drift") {
        TemporalSeries s;
        s.d = 1;
        s.dt = 0.5;
        s.values = {1.0, -2.0, 3.0, 0.5, 0.0, 0.0, 0.0, 0.0};
        const double eps = 0.5;
        auto w = integrate_path(s, eps, 0.5, 0.125 * 0.5);
        // w(t) = eps^-1 int_0^t b(s/eps^2) ds = eps int_0^{t/eps^2} b
        CHECK(w.at(0.125, 0) == doctest::Approx(eps * 0.5 * 1.0));
        CHECK(w.at(0.25, 0) == doctest::Approx(eps * 0.5 * (1.0 - 2.0)));
        CHECK(w.at(0.5, 0) == doctest::Approx(eps * 0.5 * (1.0 - 2.0 + 3.0 + 0.5)));
        CHECK(w.at(0.0625, 0) == doctest::Approx(eps * 0.25));
        CHECK_THROWS_AS(integrate_path(s, eps, 0.5, 0.2), ResolutionError);
        CHECK_THROWS_AS(integrate_path(s, eps, 10.0, 0.05), ResolutionError);
    }

    TEST_CASE("periodic drift stays within eps times its period integral") {
        BbarSpec per;
        per.model = BbarModel::periodic;
        per.amplitude = 1.3;
        per.period = 1.0;
        const double dt = 1.0 / 32;
        for (double eps : {0.5, 0.25, 0.125}) {
            auto s = bbar_series(per, 2, 1.0 / (eps * eps) + 1.0, dt, 7);
            double period_abs = 0.0;
            for (int n = 0; n < 32; ++n) period_abs += dt * std::abs(s.at(static_cast<std::size_t>(n), 0));
            auto w = integrate_path(s, eps, 1.0, eps * eps * dt);
            double sup = 0.0;
            for (std::size_t n = 0; n < w.times.size(); ++n) sup = std::max(sup, std::abs(w.value(n, 0)));
            CHECK(sup <= eps * period_abs);
        }
    }

    TEST_CASE("block increments sum to the path integral") {
        BbarSpec ou;
        ou.model = BbarModel::ou;
        auto s = bbar_series(ou, 2, 20.0, 0.1, 3);
        auto b = block_increments(s, 20);
        REQUIRE(b.count == 20);
        double acc = 0.0;
        for (std::size_t j = 0; j < b.count; ++j) acc += b.x[j * 2 + 1];
        CHECK(acc == doctest::Approx(s.integral(1, 20.0)).epsilon(1e-12));
    }

    TEST_CASE("series estimator recovers the i.i.d. block variance") {
        BbarSpec rw;
        rw.model = BbarModel::rw_interp;
        rw.amplitude = 0.8;
        std::vector<BlockIncrements> ens;
        for (int p = 0; p < 200; ++p)
            ens.push_back(block_increments(bbar_series(rw, 2, 128.0, 0.25, derive_seed(5, "t", static_cast<std::uint64_t>(p))), 128));
        auto est = estimate_sigma_series(ens, 16);
        for (int i = 0; i < 2; ++i) {
            const std::size_t k = static_cast<std::size_t>(3 * i);
            CHECK(std::abs(est.sigma_sq[k] - 0.64) <= 3.0 * est.std_error[k] + 1e-12);
        }
        CHECK(std::abs(est.sigma_sq[1]) <= 3.0 * est.std_error[1] + 1e-12);
        ens.resize(50);
        CHECK_THROWS_AS(estimate_sigma_series(ens, 16), InsufficientSamples);
    }

    TEST_CASE("empirical covariance and donsker test for an OU drift") {
        BbarSpec ou;
        ou.model = BbarModel::ou;
        ou.amplitude = 1.0;
        ou.tau = 0.25;
        auto paths = make_paths(ou, 300, 0.1, 1.0, 0.125);
        auto emp = empirical_sigma(paths, 1.0);
        const double expect = analytic_sigma_sq(ou, 2)[0];
        CHECK(std::abs(emp.sigma_sq[0] - expect) <= 3.5 * emp.std_error[0]);
        auto dr = donsker_test(paths, analytic_sigma_sq(ou, 2), {0.25, 0.5, 1.0});
        CHECK(dr.pass);
        CHECK(dr.tests > 0);
        paths.resize(100);
        CHECK_THROWS_AS(empirical_sigma(paths, 1.0), InsufficientSamples);
    }

    TEST_CASE("zero drift is reported as a deterministic zero limit") {
        auto paths = make_paths(BbarSpec{}, 200, 0.25, 0.5, 0.25);
        auto dr = donsker_test(paths, std::vector<double>(4, 0.0), {0.5});
        CHECK(dr.verdict == "deterministic-zero");
        CHECK(dr.pass);
    }

    TEST_CASE("wrong covariance fails the donsker test") {
        BbarSpec rw;
        rw.model = BbarModel::rw_interp;
        auto paths = make_paths(rw, 400, 0.1, 1.0, 0.25);
        auto dr = donsker_test(paths, {4.0, 0.0, 0.0, 4.0}, {0.5, 1.0});
        CHECK_FALSE(dr.pass);
    }

    TEST_CASE("moment check on a stationary drift shows no growth") {
        BbarSpec ou;
        ou.model = BbarModel::ou;
        std::vector<TemporalSeries> ens;
        for (int p = 0; p < 20; ++p) ens.push_back(bbar_series(ou, 2, 256.0, 0.125, static_cast<std::uint64_t>(p)));
        auto m = moment_check(ens, 0.5);
        CHECK(std::isfinite(m.moment));
        CHECK_FALSE(m.growth_flag);
        CHECK_THROWS_AS(moment_check(ens, 1.5), ValidationError);
    }

    TEST_CASE("statistics helpers") {
        CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
        CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
        CHECK(kolmogorov_pvalue(100, 0.0) == doctest::Approx(1.0));
        CHECK(kolmogorov_pvalue(100, 0.5) < 1e-10);
        std::vector<double> grid;
        for (int i = 0; i < 10; ++i) grid.push_back((i + 0.5) / 10.0);
        CHECK(ks_statistic(grid, [](double x) { return x; }) == doctest::Approx(0.05));
        CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
        std::vector<double> a{0, 0, 1, 1}, b{0, 0, 1, 1};
        CHECK(std::abs(energy_distance(a, b, 2)) < 1e-15);
        std::vector<double> far{5, 5, 6, 6};
        CHECK(energy_distance(a, far, 2) > 1.0);
    }

    TEST_CASE("permutation test separates different laws and accepts equal ones") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> g;
        std::vector<double> x(200), y(200), z(200);
        for (auto& v : x) v = g(rng);
        for (auto& v : y) v = g(rng);
        for (auto& v : z) v = g(rng) + 1.0;
        auto same = energy_permutation_test(x, y, 2, 200, 1, 0.01);
        auto diff = energy_permutation_test(x, z, 2, 200, 1, 0.01);
        CHECK(same.p_value > 0.01);
        CHECK(diff.p_value <= 0.01);
        CHECK(diff.statistic > diff.threshold);
    }
}
