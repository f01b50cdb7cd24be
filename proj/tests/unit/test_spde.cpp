#include <doctest.h>

#include <cmath>

#include "oblab/error.hpp"
#include "oblab/parallel.hpp"
#include "oblab/rng.hpp"
#include "oblab/skeleton.hpp"
#include "oblab/spde.hpp"
#include "support/oracles.hpp"

using namespace oblab;

namespace {

ProblemSpec family(const std::string& name, std::size_t n_nodes) {
    ProblemParams pp;
    pp.family = name;
    pp.n_nodes = n_nodes;
    return make_problem(pp);
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

Moments center_moments(const Stepper& st, double eps, std::size_t n_samples, std::uint64_t seed) {
    const std::size_t mid = st.grid().n_nodes / 2;
    const auto& m = st.mesh();
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto noise = sample_noise(m.n_steps, 1, m.dt(), rng::derive_seed(seed, i));
        const double v = solve_spde(st, eps, 1e4, noise).traj.row(0)[mid];
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(n_samples);
    return {s / n, (s2 - s * s / n) / (n - 1.0)};
}

}  // namespace

TEST_CASE("zero noise reproduces the skeleton bit for bit") {
    for (const char* name : {"heat_obstacle", "quasilinear_full", "linear_additive"}) {
        CAPTURE(name);
        const ProblemSpec p = family(name, 201);
        const TimeMesh m = TimeMesh::uniform(1.0, 200);
        const std::size_t J = p.coefficients.n_modes();
        const auto noise = sample_noise(m.n_steps, J, m.dt(), 5);
        const Control k = Control::from_function(m, J, [](double t, std::size_t j) { return std::cos(t) / (1.0 + j); });
        const auto det = solve_penalized(p, k, 1e4, m);
        const auto sto = solve_spde(p, 0.0, 1e4, m, noise, k);
        CHECK(sto.traj == det.traj);
        CHECK(sto.penalty_density == det.penalty_density);
        const auto unc = solve_spde(p, 0.0, 1e4, m, noise);
        CHECK(unc.traj == solve_penalized(p, Control(m, J), 1e4, m).traj);
    }
}

TEST_CASE("noise multiplying a zero shape does nothing") {
    const ProblemSpec p = family("heat_obstacle", 201);
    const TimeMesh m = TimeMesh::uniform(1.0, 200);
    const auto det = solve_penalized(p, Control(m, 1), 1e4, m);
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto noise = sample_noise(m.n_steps, 1, m.dt(), seed);
        const auto sto = solve_spde(p, 0.7, 1e4, m, noise);
        CHECK(sto.traj == det.traj);
        for (double v : sto.penalty_density.data()) CHECK(v >= 0.0);
        CHECK(sto.traj.row(m.n_steps)[100] == det.traj.row(m.n_steps)[100]);
    }
}

TEST_CASE("additive noise variance matches the discrete propagator") {
    const ProblemSpec p = family("linear_additive", 101);
    const TimeMesh m = TimeMesh::uniform(1.0, 100);
    const Stepper st(p, m);
    const std::size_t mid = p.grid.n_nodes / 2;
    const double exact = oracle::additive_noise_variance(p.grid, m, 0.3, 1.0, mid);
    const auto mo = center_moments(st, 1.0, 10000, 99);
    MESSAGE("sample variance " << mo.var << " vs discrete closed form " << exact);
    CHECK(std::abs(mo.var / exact - 1.0) <= 0.05);

    // The mean is the deterministic solution.
    const double det = solve_penalized(st, Control(m, 1), 1e4).traj.row(0)[mid];
    CHECK(std::abs(mo.mean - det) <= 5.0 * std::sqrt(exact / 10000.0));
}

TEST_CASE("variance is linear in epsilon for additive noise") {
    const ProblemSpec p = family("linear_additive", 101);
    const TimeMesh m = TimeMesh::uniform(1.0, 100);
    const Stepper st(p, m);
    const auto a = center_moments(st, 0.25, 4000, 7);
    const auto b = center_moments(st, 1.0, 4000, 8);
    CHECK(std::abs((a.var / b.var) / 0.25 - 1.0) <= 0.10);
}

TEST_CASE("noise shape errors") {
    const ProblemSpec p = family("linear_additive", 101);
    const TimeMesh m = TimeMesh::uniform(1.0, 100);
    CHECK_THROWS_AS(solve_spde(p, 1.0, 1e4, m, sample_noise(50, 1, m.dt(), 1)), DomainError);
    CHECK_THROWS_AS(solve_spde(p, 1.0, 1e4, m, sample_noise(100, 2, m.dt(), 1)), DomainError);
    CHECK_THROWS_AS(solve_spde(p, -1.0, 1e4, m, sample_noise(100, 1, m.dt(), 1)), ConfigError);
}

TEST_CASE("condition (i) distances") {
    const TimeMesh m = TimeMesh::uniform(1.0, 100);

    SUBCASE("no noise coefficient, no distance") {
        const ProblemSpec p = family("heat_obstacle", 101);
        const auto fam = ball_family(m, 1, 4.0, 3);
        const auto rep = condition_i_distance(p, {0.1, 0.01}, fam, 1e4, m, 6, 3, {0.1});
        for (const auto& s : rep.per_epsilon) {
            CHECK(s.mean == 0.0);
            CHECK(s.tail_probability[0] == 0.0);
            CHECK(s.n_ok == 6);
        }
    }

    SUBCASE("serial and parallel aggregation agree exactly") {
        const ProblemSpec p = family("quasilinear_full", 101);
        const auto fam = ball_family(m, p.coefficients.n_modes(), 4.0, 3);
        const auto a = condition_i_distance(p, {0.05, 0.0125}, fam, 1e4, m, 12, 17, {0.01, 0.1}, 1);
        const auto b = condition_i_distance(p, {0.05, 0.0125}, fam, 1e4, m, 12, 17, {0.01, 0.1}, 3);
        REQUIRE(a.per_epsilon.size() == 2);
        for (std::size_t e = 0; e < 2; ++e) {
            CHECK(a.per_epsilon[e].mean == b.per_epsilon[e].mean);
            CHECK(a.per_epsilon[e].variance == b.per_epsilon[e].variance);
            CHECK(a.per_epsilon[e].tail_probability == b.per_epsilon[e].tail_probability);
        }
        CHECK(a.slope == b.slope);
        CHECK(a.per_epsilon[1].mean <= a.per_epsilon[0].mean + a.per_epsilon[0].std_error);
        // Small-epsilon tail at delta = 0.1; recorded value for this seed.
        MESSAGE("P(distance > 0.1) at eps = 0.0125: " << a.per_epsilon[1].tail_probability[1]);
        CHECK(a.per_epsilon[1].tail_probability[1] == doctest::Approx(1.0 / 12.0));
    }
}

TEST_CASE("log-log slope") {
    const std::vector<double> x{1, 2, 4, 8};
    const std::vector<double> y{3, 3 * std::sqrt(2.0), 6, 6 * std::sqrt(2.0)};
    CHECK(loglog_slope(x, y) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(oracle::fitted_order(x, y) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 7) throw ConfigError("boom");
                    }),
                    ConfigError);
}
