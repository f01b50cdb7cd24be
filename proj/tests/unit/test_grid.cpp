#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/grid.hpp"
#include "support/oracles.hpp"

using namespace oblab;

namespace {

constexpr double pi = std::numbers::pi;

double max_interior_error(const Field& got, const std::function<double(double)>& want) {
    double e = 0.0;
    for (std::size_t i = 1; i + 1 < got.size(); ++i) e = std::max(e, std::abs(got[i] - want(got.grid().node(i))));
    return e;
}

Field random_field(const Grid& g, std::mt19937_64& rng, bool zero_boundary) {
    std::normal_distribution<double> nd;
    Field f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = nd(rng);
    if (zero_boundary) f[0] = f[f.size() - 1] = 0.0;
    return f;
}

Trajectory random_trajectory(const Grid& g, const TimeMesh& m, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Trajectory t(g, m);
    for (double& v : t.data()) v = nd(rng);
    return t;
}

}  // namespace

TEST_CASE("grid construction") {
    const Grid g = Grid::uniform(-1.0, 1.0, 5);
    CHECK(g.spacing() == 0.5);
    CHECK(g.node(0) == -1.0);
    CHECK(g.node(4) == 1.0);
    CHECK(g.dimension == 1);
    CHECK_THROWS_AS(Grid::uniform(0.0, 1.0, 2), DomainError);
    CHECK_THROWS_AS(Grid::uniform(1.0, 1.0, 10), DomainError);
    CHECK_THROWS_AS(TimeMesh::uniform(1.0, 0), DomainError);
    CHECK(TimeMesh::uniform(2.0, 4).time(4) == 2.0);
}

TEST_CASE("laplacian on constants and quadratics") {
    const Grid g = Grid::uniform(-2.0, 3.0, 41);
    const Field c = Field::from_function(g, [](double) { return 7.25; });
    const Field lc = laplacian(c);
    const Field q = laplacian(Field::from_function(g, [](double x) { return x * x; }));
    for (std::size_t i = 1; i + 1 < g.n_nodes; ++i) {
        CHECK(lc[i] == 0.0);
        CHECK(q[i] == doctest::Approx(2.0).epsilon(1e-9));
    }
    CHECK(q[0] == 0.0);
    CHECK(q[40] == 0.0);
}

TEST_CASE("laplacian of sin(pi x) meets the Taylor bound") {
    const Grid g = Grid::uniform(0.0, 1.0, 201);
    const double h = g.spacing();
    const Field l = laplacian(Field::from_function(g, [](double x) { return std::sin(pi * x); }));
    const double err = max_interior_error(l, [](double x) { return -pi * pi * std::sin(pi * x); });
    CHECK(err <= 10.0 * h * h * std::pow(pi, 4));
    // The leading term is h^2/12 |f''''|, so the bound has slack of about 120.
    CHECK(err <= h * h * std::pow(pi, 4) / 12.0 * 1.01);
}

TEST_CASE("gradient exact on constants and affine functions") {
    const Grid g = Grid::uniform(-1.0, 2.0, 31);
    const Field gc = gradient(Field::from_function(g, [](double) { return -4.0; }));
    const Field ga = gradient(Field::from_function(g, [](double x) { return 3.0 * x; }));
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        CHECK(gc[i] == 0.0);
        CHECK(ga[i] == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("gradient of x^3 converges at order 2") {
    std::vector<double> errs;
    for (std::size_t n : {21, 41, 81, 161}) {
        const Grid g = Grid::uniform(-1.0, 1.0, n);
        const Field d = gradient(Field::from_function(g, [](double x) { return x * x * x; }));
        errs.push_back(max_interior_error(d, [](double x) { return 3.0 * x * x; }));
    }
    for (double o : oracle::pairwise_orders(errs)) CHECK(o >= 1.9);
}

TEST_CASE("divergence of flux") {
    const Grid g = Grid::uniform(0.0, 1.0, 51);
    const Field dc = divergence_of_flux(Field::from_function(g, [](double) { return 2.0; }));
    const Field dx = divergence_of_flux(Field::from_function(g, [](double x) { return x; }));
    for (std::size_t i = 1; i + 1 < g.n_nodes; ++i) {
        CHECK(dc[i] == 0.0);
        CHECK(dx[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
    std::vector<double> errs;
    for (std::size_t n : {41, 81, 161, 321}) {
        const Grid gg = Grid::uniform(0.0, 1.0, n);
        const Field d = divergence_of_flux(Field::from_function(gg, [](double x) { return std::sin(2 * pi * x); }));
        errs.push_back(max_interior_error(d, [](double x) { return 2 * pi * std::cos(2 * pi * x); }));
    }
    for (double o : oracle::pairwise_orders(errs)) CHECK(o >= 1.9);
}

TEST_CASE("laplacian converges at order 2 on smooth data") {
    std::vector<double> errs;
    for (std::size_t n : {21, 41, 81, 161}) {
        const Grid g = Grid::uniform(-2.0, 2.0, n);
        const Field l = laplacian(Field::from_function(g, [](double x) { return std::exp(-x * x); }));
        errs.push_back(max_interior_error(l, [](double x) { return (4 * x * x - 2) * std::exp(-x * x); }));
    }
    for (double o : oracle::pairwise_orders(errs)) CHECK(o >= 1.9);
}

TEST_CASE("operators are linear") {
    std::mt19937_64 rng(11);
    const Grid g = Grid::uniform(-3.0, 3.0, 97);
    for (int trial = 0; trial < 20; ++trial) {
        const Field f = random_field(g, rng, false);
        const Field h = random_field(g, rng, false);
        const double a = 1.7, b = -0.3;
        const Field comb = a * f + b * h;
        const Field l = laplacian(comb), lf = laplacian(f), lh = laplacian(h);
        const Field d = divergence_of_flux(comb), df = divergence_of_flux(f), dh = divergence_of_flux(h);
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            CHECK(l[i] == doctest::Approx(a * lf[i] + b * lh[i]).epsilon(1e-12).scale(1e3));
            CHECK(d[i] == doctest::Approx(a * df[i] + b * dh[i]).epsilon(1e-12).scale(1e2));
        }
    }
}

TEST_CASE("summation by parts for zero-boundary fields") {
    std::mt19937_64 rng(5);
    const Grid g = Grid::uniform(0.0, 2.0, 64);
    const double h = g.spacing();
    for (int trial = 0; trial < 20; ++trial) {
        const Field f = random_field(g, rng, true);
        const Field q = random_field(g, rng, true);
        const Field lf = laplacian(f);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < g.n_nodes; ++i) lhs += h * lf[i] * q[i];
        for (std::size_t i = 0; i + 1 < g.n_nodes; ++i) rhs -= h * (f[i + 1] - f[i]) / h * (q[i + 1] - q[i]) / h;
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
    }
}

TEST_CASE("norms") {
    const Grid g = Grid::uniform(0.0, 1.0, 101);
    Field z(g);
    CHECK(h_norm(z) == 0.0);
    CHECK(v_norm(z) == 0.0);

    // Interior constant: the Riemann sum is h (n - 2) = 1 - h.
    Field one = Field::from_function(g, [](double) { return 1.0; });
    one[0] = one[100] = 0.0;
    CHECK(h_norm(one) == doctest::Approx(std::sqrt(1.0 - g.spacing())).epsilon(1e-14));
    CHECK(h_norm(one) == doctest::Approx(1.0).epsilon(g.spacing()));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Field f = random_field(g, rng, false);
        const Field q = random_field(g, rng, false);
        const double a = -2.5;
        CHECK(h_norm(a * f) == doctest::Approx(std::abs(a) * h_norm(f)).epsilon(1e-13));
        CHECK(v_norm(a * f) == doctest::Approx(std::abs(a) * v_norm(f)).epsilon(1e-13));
        CHECK(h_norm(f + q) <= h_norm(f) + h_norm(q) + 1e-12);
        CHECK(v_norm(f + q) <= v_norm(f) + v_norm(q) + 1e-12);
        CHECK(v_norm(f) >= h_norm(f));
    }
}

TEST_CASE("ht_distance") {
    const Grid g = Grid::uniform(-1.0, 1.0, 33);
    const TimeMesh m = TimeMesh::uniform(0.5, 20);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Trajectory a = random_trajectory(g, m, rng);
        const Trajectory b = random_trajectory(g, m, rng);
        CHECK(ht_distance(a, a) == 0.0);
        CHECK(ht_distance(a, b) == ht_distance(b, a));
        CHECK(ht_distance(a, b) > 0.0);
    }
    // Constant-in-time difference c on the interior: sup term plus sqrt(T) v_norm.
    Trajectory a(g, m), b(g, m);
    Field d(g);
    for (std::size_t i = 1; i + 1 < g.n_nodes; ++i) d[i] = std::sin(3.0 * g.node(i));
    for (std::size_t t = 0; t < m.n_nodes(); ++t) a.set_field(t, d);
    CHECK(ht_distance(a, b) == doctest::Approx(h_norm(d) + std::sqrt(m.horizon) * v_norm(d)).epsilon(1e-12));

    const Trajectory other(Grid::uniform(-1.0, 1.0, 17), m);
    CHECK_THROWS_AS(ht_distance(a, other), DomainError);
    const Trajectory other_mesh(g, TimeMesh::uniform(0.5, 10));
    CHECK_THROWS_AS(ht_distance(a, other_mesh), DomainError);
}

TEST_CASE("field arithmetic rejects mismatched grids") {
    Field a(Grid::uniform(0, 1, 5));
    const Field b(Grid::uniform(0, 1, 6));
    CHECK_THROWS_AS(a += b, DomainError);
    Field bad(Grid::uniform(0, 1, 5));
    bad[2] = std::nan("");
    CHECK_FALSE(bad.all_finite());
}

TEST_CASE("trajectory CSV round trip") {
    const Grid g = Grid::uniform(-1.5, 2.5, 17);
    const TimeMesh m = TimeMesh::uniform(0.75, 6);
    std::mt19937_64 rng(1);
    const Trajectory a = random_trajectory(g, m, rng);
    std::stringstream ss;
    write_csv(ss, a);
    const std::string first = ss.str();
    CHECK(first.rfind("t,-1.5,", 0) == 0);
    const Trajectory b = read_trajectory_csv(ss);
    CHECK(b.grid() == g);
    CHECK(b.mesh() == m);
    CHECK(b == a);
    std::stringstream again;
    write_csv(again, b);
    CHECK(again.str() == first);

    std::stringstream bad("x,1,2\n0,1,2\n");
    CHECK_THROWS_AS(read_trajectory_csv(bad), DomainError);
}
