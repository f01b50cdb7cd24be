// End-to-end acceptance run. One line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oblab/bsde.hpp"
#include "oblab/harness.hpp"
#include "oblab/ldp.hpp"
#include "oblab/skeleton.hpp"
#include "oblab/spde.hpp"
#include "support/oracles.hpp"

using namespace oblab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ProblemSpec family(const std::string& name, std::size_t n_nodes, double horizon = 1.0,
                   std::map<std::string, double> knobs = {}) {
    ProblemParams pp;
    pp.family = name;
    pp.n_nodes = n_nodes;
    pp.horizon = horizon;
    pp.values = std::move(knobs);
    return make_problem(pp);
}

Control zero_control(const ProblemSpec& p, const TimeMesh& m) { return Control(m, p.coefficients.n_modes()); }

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return true;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3g", v[i]);
    return s;
}

Field row0(const Trajectory& u) {
    Field f(u.grid());
    auto r = u.row(0);
    std::copy(r.begin(), r.end(), f.values().begin());
    return f;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

Outcome heat_exactness() {
    const ProblemSpec p = family("free_heat", 401);
    // Every coarse mesh node is a node of the finest mesh; evaluate the oracle once there.
    const TimeMesh finest = TimeMesh::uniform(1.0, 800);
    const Trajectory ref_fine = oracle::heat_trajectory(p.grid, finest, p.terminal);
    auto reference = [&](const TimeMesh& m) {
        Trajectory r(p.grid, m);
        const std::size_t stride = finest.n_steps / m.n_steps;
        for (std::size_t t = 0; t < m.n_nodes(); ++t) {
            auto src = ref_fine.row(t * stride);
            std::copy(src.begin(), src.end(), r.row(t).begin());
        }
        return r;
    };
    std::vector<double> dts, errs;
    double d = 0.0;
    for (std::size_t nt : {100, 200, 400, 800}) {
        const TimeMesh m = TimeMesh::uniform(1.0, nt);
        errs.push_back(ht_distance(solve_penalized(p, zero_control(p, m), 1e4, m).traj, reference(m)));
        dts.push_back(m.dt());
        if (nt == 400) d = errs.back();
    }
    const double order = oracle::fitted_order(dts, errs);
    return {d <= 5e-3 && order >= 0.9, fmt("distance %.3g at 401 nodes / 400 steps (<= 5e-3), dt order %.3f (>= 0.9), errors %s",
                                           d, order, join(errs).c_str())};
}

Outcome penalization_rate() {
    const ProblemSpec p = family("heat_obstacle", 401, 1e-3);
    const TimeMesh m = TimeMesh::uniform(1e-3, 1600);
    const Stepper st(p, m);
    std::vector<double> logn, logl, scaled;
    for (double n : {1e3, 1e4, 1e5, 1e6}) {
        const double l2 = solve_penalized(st, zero_control(p, m), n).diagnostics.penalty_l2;
        logn.push_back(std::log(n));
        logl.push_back(std::log(l2));
        scaled.push_back(n * l2 * l2);
    }
    const double exponent = -linear_fit(logn, logl).second;
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    const double ratio = *hi / *lo;
    return {exponent >= 0.4 && exponent <= 0.6 && ratio < 3.0,
            fmt("exponent %.3f (in [0.4, 0.6]), n*l2^2 max/min %.3f (< 3)", exponent, ratio)};
}

Outcome cross_validation() {
    bool ok = true;
    std::string d;
    for (const char* name : {"heat_obstacle", "linear_additive", "quasilinear_full"}) {
        const ProblemSpec p = family(name, 401);
        const TimeMesh m = TimeMesh::uniform(1.0, 400);
        const Stepper st(p, m);
        const auto sk = solve_skeleton(st, zero_control(p, m), {1e3, 1e7, 1e-3});
        const double dist = ht_distance(sk.traj, solve_projected(st, zero_control(p, m)).traj);
        ok = ok && sk.converged && dist <= 2e-3;
        d += fmt("%s%s %.3g (n=%g)", d.empty() ? "" : ", ", name, dist, sk.n_final);
    }
    return {ok, d + " (<= 2e-3)"};
}

Outcome complementarity() {
    const ProblemSpec p = family("heat_obstacle", 401);
    const TimeMesh m = TimeMesh::uniform(1.0, 400);
    const Stepper st(p, m);
    const auto sk = solve_skeleton(st, zero_control(p, m), {1e3, 1e7, 1e-3});
    std::vector<double> res;
    double disjoint = 0.0;
    for (const auto& h : sk.history) {
        res.push_back(h.residual);
        const auto sol = solve_penalized(st, zero_control(p, m), h.n);
        disjoint = std::max(disjoint, disjointness_violation(sol.traj, *sol.obstacle));
    }
    const bool ok = strictly_decreasing(res) && res.back() < 1e-3 && disjoint == 0.0;
    return {ok, fmt("residual %.3g at n_final %g (< 1e-3), monotone over %zu doublings: %s, disjointness %g", res.back(),
                    sk.n_final, res.size() - 1, strictly_decreasing(res) ? "yes" : "no", disjoint)};
}

Outcome uniform_convergence() {
    const ProblemSpec p = family("quasilinear_full", 401);
    const TimeMesh m = TimeMesh::uniform(1.0, 400);
    const Stepper st(p, m);
    const auto fam = ball_family(m, p.coefficients.n_modes(), 4.0, 5);
    std::vector<double> gaps(4, 0.0);
    for (const auto& k : fam) {
        double n = 1e3;
        auto prev = solve_penalized(st, k, n);
        for (double& g : gaps) {
            n *= 2.0;
            auto next = solve_penalized(st, k, n);
            g = std::max(g, ht_distance(next.traj, prev.traj));
            prev = std::move(next);
        }
    }
    return {strictly_decreasing(gaps), "max family gaps " + join(gaps)};
}

Outcome weak_continuity() {
    const ProblemSpec p = family("linear_additive", 401);
    const TimeMesh m = TimeMesh::uniform(1.0, 400);
    const auto rep = condition_ii_test(p, m, zero_control(p, m), {1.0}, {1, 2, 4, 8, 16},
                                       [](double t) { return std::exp(-t) * (1.0 + t); }, 4.0);
    std::vector<double> d;
    for (const auto& e : rep.entries) d.push_back(e.distance);
    const double ratio = d.back() / d.front();
    return {rep.monotone && ratio <= 0.25, fmt("distances %s, final/initial %.3f (<= 0.25)", join(d).c_str(), ratio)};
}

Outcome condition_i() {
    const ProblemSpec p = family("quasilinear_full", 201);
    const TimeMesh m = TimeMesh::uniform(1.0, 200);
    const std::vector<double> eps{0.1, 0.05, 0.025, 0.0125};
    const auto fam = ball_family(m, p.coefficients.n_modes(), 4.0, 5);
    const auto rep = condition_i_distance(p, eps, fam, 1e4, m, 200, 20240611, {0.1});
    std::vector<double> means;
    std::size_t ok_samples = 0;
    for (const auto& s : rep.per_epsilon) {
        means.push_back(s.mean);
        ok_samples += s.n_ok;
    }
    const bool ok = strictly_decreasing(means) && rep.slope >= 0.35 && rep.slope <= 0.65 && ok_samples == 800;
    return {ok, fmt("means %s, slope %.3f (in [0.35, 0.65])", join(means).c_str(), rep.slope)};
}

Outcome rate_vs_oracle() {
    const ProblemSpec p = family("linear_additive", 201);
    const TimeMesh m = TimeMesh::uniform(1.0, 50);
    const double n = 1e4;
    const double delta = 0.05;
    const Stepper st(p, m);
    const Field base = row0(solve_penalized(st, zero_control(p, m), n).traj);
    const Control one = Control::from_function(m, 1, [](double, std::size_t) { return 1.0; });
    const Field center = row0(solve_penalized(st, one, n).traj);
    OptConfig opt;
    opt.penalty_n = n;
    const std::vector<double> schedule{10, 1e2, 1e3, 1e4};

    // Affine control-to-profile map, one column per time step.
    const std::size_t nx = p.grid.n_nodes;
    Eigen::MatrixXd A(nx, m.n_steps);
    for (std::size_t i = 0; i < m.n_steps; ++i) {
        Control e(m, 1);
        e(i, 0) = 1.0;
        const auto u = solve_penalized(st, e, n).traj;
        for (std::size_t x = 0; x < nx; ++x) A(x, i) = u.row(0)[x] - base[x];
    }
    Eigen::VectorXd r(nx);
    for (std::size_t x = 0; x < nx; ++x) r(x) = center[x] - base[x];
    const auto ora = oracle::least_norm(A, r, m.dt(), p.grid.spacing(), delta);

    const auto rr = minimize_rate(p, m, TargetEvent::terminal_ball(center, delta), schedule, zero_control(p, m), opt);
    const double rel = std::abs(rr.rate - ora.rate) / ora.rate;
    const auto self = minimize_rate(p, m, TargetEvent::terminal_ball(base, delta), schedule, zero_control(p, m), opt);

    Field far(p.grid);
    for (std::size_t i = 1; i + 1 < nx; ++i) far[i] = 5.0;
    const ProblemSpec heat = family("free_heat", 201);
    OptConfig short_opt = opt;
    short_opt.max_iter = 20;
    const auto unreachable = minimize_rate(heat, m, TargetEvent::terminal_ball(far, 0.1), {10, 1e2},
                                           zero_control(heat, m), short_opt);

    const bool ok = rr.feasible && rel <= 0.02 && self.feasible && self.rate <= 1e-6 && !unreachable.feasible &&
                    std::isinf(unreachable.rate);
    return {ok, fmt("rate %.5f vs oracle %.5f (rel %.2e <= 0.02), self-centred %.2g (<= 1e-6), unreachable %s", rr.rate,
                    ora.rate, rel, self.rate, std::isinf(unreachable.rate) ? "inf" : "finite")};
}

Outcome ldp_numeric() {
    const ProblemSpec p = family("linear_additive", 201);
    const TimeMesh m = TimeMesh::uniform(1.0, 50);
    const double n = 1e4;
    const Control one = Control::from_function(m, 1, [](double, std::size_t) { return 1.0; });
    const auto ev = TargetEvent::terminal_ball(row0(solve_penalized(p, one, n, m).traj), 0.05);
    OptConfig opt;
    opt.penalty_n = n;
    const auto rr = minimize_rate(p, m, ev, {10, 1e2, 1e3, 1e4}, zero_control(p, m), opt);
    if (!rr.feasible) return {false, "rate minimization infeasible"};
    const auto rep = mc_ldp_compare(p, m, ev, {0.4, 0.2, 0.1, 0.05}, 100000, 5, true, rr, n);
    std::vector<double> elp;
    bool reliable = true;
    for (const auto& s : rep.per_epsilon) {
        elp.push_back(s.eps_log_p);
        reliable = reliable && s.reliable;
    }
    return {reliable && rep.relative_error <= 0.25,
            fmt("eps log p %s, extrapolated %.4f vs -I %.4f (rel %.3f <= 0.25)", join(elp).c_str(), rep.extrapolated,
                -rr.rate, rep.relative_error)};
}

Outcome bsde_and_star() {
    struct Case {
        const char* name;
        std::map<std::string, double> knobs;
    };
    const std::vector<Case> cases{{"free_heat", {{"width", 2.0}, {"amplitude", 0.5}}}, {"quasilinear_full", {}}};
    const TimeMesh fine_mesh = TimeMesh::uniform(1.0, 800);
    const auto fine = make_ensemble(10000, fine_mesh, -4.0, 4.0, 7);
    bool ok = true;
    std::string d;
    for (const auto& c : cases) {
        std::vector<double> dts, rms;
        for (std::size_t nt : {100, 200, 400, 800}) {
            const ProblemSpec p = family(c.name, nt + 1, 1.0, c.knobs);
            const TimeMesh m = TimeMesh::uniform(1.0, nt);
            const auto sol = solve_penalized(p, zero_control(p, m), 1e4, m);
            rms.push_back(bsde_residual(p, sol, coarsen(fine, 800 / nt)).rms);
            dts.push_back(m.dt());
        }
        const double order = loglog_slope(dts, rms);
        ok = ok && order >= 0.5;
        d += fmt("%s order %.4f, ", c.name, order);
    }
    const auto ens = make_ensemble(10000, TimeMesh::uniform(1.0, 400), -4.0, 4.0, 3, 1.0);
    const auto s = star_integral_check([](double, double x) { return std::sin(x); },
                                       [](double, double x) { return std::cos(x); }, ens);
    const double z = std::abs(s.mean_gap) / s.std_error;
    ok = ok && z <= 3.0;
    return {ok, d + fmt("(>= 0.5); star mean gap %.3g = %.2f se (<= 3)", s.mean_gap, z)};
}

Outcome determinism() {
    const fs::path src(OBLAB_SOURCE_DIR);
    const fs::path scratch = fs::temp_directory_path() / "oblab_acceptance";
    fs::remove_all(scratch);
    bool ok = true;
    std::size_t n_configs = 0;
    std::string bad;
    std::vector<fs::path> configs;
    for (const auto& e : fs::directory_iterator(src / "configs")) {
        if (e.path().extension() == ".json") configs.push_back(e.path());
    }
    std::sort(configs.begin(), configs.end());
    for (const auto& path : configs) {
        const auto cfg = load_config(path);
        const std::string stem = path.stem().string();
        RunOptions a, b;
        a.out_dir = scratch / (stem + "_a");
        b.out_dir = scratch / (stem + "_b");
        const auto ra = run(cfg, a);
        const auto rb = run(cfg, b);
        bool same = ra.files == rb.files;
        for (const auto& f : ra.files) {
            if (f != "manifest.json" && slurp(*a.out_dir / f) != slurp(*b.out_dir / f)) same = false;
        }
        const fs::path base_path = src / "baselines" / (stem + ".json");
        bool base_ok = false;
        if (fs::exists(base_path)) {
            std::ifstream in(base_path);
            base_ok = compare_baseline(ra.report, json::parse(in)).passed;
        }
        if (!same) bad += " " + stem + "(not byte-identical)";
        if (!base_ok) bad += " " + stem + "(baseline)";
        ok = ok && same && base_ok;
        ++n_configs;
    }
    fs::remove_all(scratch);
    return {ok && n_configs > 0, fmt("%zu configs run twice and compared to baselines", n_configs) +
                                     (bad.empty() ? "" : ";" + bad)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* title;
        double budget_s;  // 0: no runtime limit
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> all{
        {1, "heat equation exactness", 5, heat_exactness},
        {2, "penalization rate", 30, penalization_rate},
        {3, "scheme cross-validation", 60, cross_validation},
        {4, "complementarity", 0, complementarity},
        {5, "uniform convergence", 0, uniform_convergence},
        {6, "weak-convergence continuity", 0, weak_continuity},
        {7, "condition (i)", 600, condition_i},
        {8, "rate function vs least-norm oracle", 0, rate_vs_oracle},
        {9, "LDP numeric check", 900, ldp_numeric},
        {10, "BSDE representation and star integral", 0, bsde_and_star},
        {11, "determinism and regression", 0, determinism},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs >= c.budget_s) {
            o.pass = false;
            o.detail += fmt("; over the %.0f s budget", c.budget_s);
        }
        std::printf("criterion %2d %s  %s: %s [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
