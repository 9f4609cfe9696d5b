#include <doctest.h>

#include <cmath>

#include "dh/errors.hpp"
#include "dh/experiment.hpp"

using namespace dh;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.grid = SpaceTimeGrid{2, 16, 8, 1.0, 1.0};
    cfg.domain = SimDomain{2, 64, 1.0};
    cfg.T = 0.002;
    cfg.dt = 2e-4;
    cfg.n_snapshots = 4;
    cfg.data.width = 0.08;
    cfg.eps_list = {0.25, 0.125};
    cfg.ensemble = 3;
    cfg.permutations = 50;
    return cfg;
}

}  // namespace

TEST_SUITE("experiment") {
    TEST_CASE("config validation") {
        auto cfg = small_config();
        CHECK_NOTHROW(cfg.validate());
        cfg.eps_list = {0.125, 0.25};
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.eps_list = {1.5};
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.delta_list = {1e-3, 1e-4};
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.domain.d = 3;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        CHECK(parse_env_kind("laminate") == EnvKind::laminate);
        CHECK_THROWS_AS(parse_env_kind("foam"), ValidationError);
        CHECK(to_string(parse_drift_source("series")) == "series");
    }

    TEST_CASE("probe vector of a constant field is the probe mass") {
        SimDomain dom{2, 64, 1.0};
        auto probes = standard_probes(dom);
        REQUIRE(probes.chi.size() == 5);
        Field one(dom.size(), 1.0), two(dom.size(), 2.0);
        auto a = probe_vector(dom, probes, one);
        auto b = probe_vector(dom, probes, two);
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(a[k] > 0.0);
            CHECK(b[k] == doctest::Approx(2.0 * a[k]));
        }
    }

    TEST_CASE("law distance") {
        std::vector<std::vector<double>> a{{0.0, 1.0}, {1.0, 0.0}}, b{{5.0, 5.0}, {6.0, 5.0}};
        CHECK(std::abs(law_distance(a, a)) < 1e-15);
        CHECK(law_distance(a, b) > 1.0);
        std::vector<std::vector<double>> c{{1.0}};
        CHECK_THROWS_AS(law_distance(a, c), DimensionMismatch);
    }

    TEST_CASE("environment kinds") {
        auto cfg = small_config();
        cfg.env_kind = EnvKind::trivial;
        auto t = make_environment(cfg, 0);
        CHECK(t.a.at(0, 0)[5] == cfg.params.lambda);
        cfg.env_kind = EnvKind::laminate;
        auto l = make_environment(cfg, 0);
        CHECK(l.params.lambda == doctest::Approx(cfg.params.lambda));
        cfg.env_kind = EnvKind::random;
        CHECK(make_environment(cfg, 1).seed == make_environment(cfg, 1).seed);
        CHECK(make_environment(cfg, 1).seed != make_environment(cfg, 2).seed);
    }

    TEST_CASE("trivial environment has no homogenization error") {
        auto cfg = small_config();
        cfg.env_kind = EnvKind::trivial;
        auto rep = homogenization_run(cfg);
        CHECK(rep.status == "complete");
        REQUIRE(rep.per_eps.size() == 2);
        for (const auto& e : rep.per_eps) {
            for (double v : e.pathwise_error) CHECK(v < 1e-10);
            CHECK(std::abs(e.law_distance) < 1e-10);
        }
        CHECK(rep.realizations.size() == 3);
        CHECK(rep.realizations[0].a_bar[0] == doctest::Approx(cfg.params.lambda).epsilon(1e-10));
    }

    TEST_CASE("report does not depend on the worker count") {
        auto cfg = small_config();
        cfg.workers = 1;
        auto a = homogenization_run(cfg);
        cfg.workers = 3;
        auto b = homogenization_run(cfg);
        REQUIRE(a.per_eps.size() == b.per_eps.size());
        for (std::size_t e = 0; e < a.per_eps.size(); ++e) {
            CHECK(a.per_eps[e].pathwise_error == b.per_eps[e].pathwise_error);
            CHECK(a.per_eps[e].probes_eps == b.per_eps[e].probes_eps);
            CHECK(a.per_eps[e].permutation_p == b.per_eps[e].permutation_p);
        }
        for (std::size_t r = 0; r < a.realizations.size(); ++r) CHECK(a.realizations[r].a_bar == b.realizations[r].a_bar);
    }

    TEST_CASE("a failing realization yields a partial report") {
        auto cfg = small_config();
        cfg.ensemble = 2;
        cfg.gmres_tol = 1e-300;
        bool called = false;
        ConvergenceReport partial;
        CHECK_THROWS_AS(homogenization_run(cfg, [&](const ConvergenceReport& r) {
                            called = true;
                            partial = r;
                        }),
                        Error);
        CHECK(called);
        CHECK(partial.status == "partial");
        CHECK(partial.error.find("realization 0") != std::string::npos);
    }

    TEST_CASE("perturbed test function lowers the residual on a laminate") {
        auto cfg = small_config();
        cfg.env_kind = EnvKind::laminate;
        auto env = make_environment(cfg, 0);
        ResidualConfig rc;
        rc.eps = 0.125;
        rc.delta = 1e-4;
        SimDomain dom{2, 64, 1.0};
        DataPreset p;
        p.width = 0.1;
        rc.data = make_cauchy_data(dom, 0.004, p);
        rc.psi.width = 0.1;
        rc.psi.center = {0.55, 0.5};
        rc.opts.dt = 2e-4;
        rc.opts.n_snapshots = 10;
        auto r = perturbed_test_residual(env, rc);
        CHECK(r.corrected < r.plain);
        CHECK(r.delta_term <= r.delta_bound * std::sqrt(rc.delta));
        rc.direction = 3;
        CHECK_THROWS_AS(perturbed_test_residual(env, rc), ValidationError);
    }
}
