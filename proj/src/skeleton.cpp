#include "oblab/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/kernels.hpp"

namespace oblab {

void require_compatible(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh) {
    require_same_mesh(control.mesh(), mesh, "control");
    if (control.n_modes() != problem.coefficients.n_modes()) {
        std::ostringstream os;
        os << "control has " << control.n_modes() << " modes, problem has " << problem.coefficients.n_modes();
        throw DomainError(os.str());
    }
    if (!control.all_finite()) throw DomainError("control has non-finite entries");
}

PenaltyDiagnostics diagnostics(const Trajectory& u, const Trajectory& obstacle) {
    PenaltyDiagnostics d;
    const Grid& grid = u.grid();
    const std::size_t N = u.mesh().n_steps;
    const std::size_t n = grid.n_nodes;
    double sup_h = 0.0;
    double v_sum = 0.0;
    for (std::size_t t = 0; t <= N; ++t) {
        const double hn = h_norm(grid, u.row(t));
        sup_h = std::max(sup_h, hn * hn);
        if (t < N) {
            const double vn = v_norm(grid, u.row(t));
            v_sum += vn * vn;
        }
    }
    d.energy = sup_h + u.mesh().dt() * v_sum;
    d.penalty_l2 = shortfall_l2(u, obstacle);
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < N; ++t) {
        auto ur = u.row(t);
        auto lr = obstacle.row(t);
        for (std::size_t i = 1; i + 1 < n; ++i) gap = std::min(gap, ur[i] - lr[i]);
    }
    d.min_gap = gap;
    return d;
}

double shortfall_l2(const Trajectory& u, const Trajectory& obstacle) {
    const std::size_t N = u.mesh().n_steps;
    const std::size_t n = u.grid().n_nodes;
    const auto& k = kernels::active();
    double s = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
        s += k.sum_squares_shortfall(u.row(t).subspan(1, n - 2), obstacle.row(t).subspan(1, n - 2));
    }
    return std::sqrt(u.mesh().dt() * u.grid().spacing() * s);
}

double shortfall_l4_max(const Trajectory& u, const Trajectory& obstacle) {
    const std::size_t N = u.mesh().n_steps;
    const std::size_t n = u.grid().n_nodes;
    double best = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
        auto ur = u.row(t);
        auto lr = obstacle.row(t);
        double s = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double d = std::min(ur[i] - lr[i], 0.0);
            s += (d * d) * (d * d);
        }
        best = std::max(best, std::pow(u.grid().spacing() * s, 0.25));
    }
    return best;
}

namespace {

double pairing(const Trajectory& u, const Trajectory& density, const Trajectory& obstacle, bool positive) {
    const std::size_t N = u.mesh().n_steps;
    const std::size_t n = u.grid().n_nodes;
    double s = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
        auto ur = u.row(t);
        auto dr = density.row(t);
        auto lr = obstacle.row(t);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double d = ur[i] - lr[i];
            const double part = positive ? std::max(d, 0.0) : std::max(-d, 0.0);
            s += part * dr[i];
        }
    }
    return u.mesh().dt() * u.grid().spacing() * s;
}

PenalizedSolution package(const Stepper& stepper, const Control& control, double n, MarchResult&& r) {
    PenalizedSolution sol;
    sol.traj = std::move(r.traj);
    sol.penalty_density = std::move(r.density);
    sol.obstacle = stepper.obstacle();
    sol.n = n;
    sol.control = control;
    sol.diagnostics = diagnostics(sol.traj, *sol.obstacle);
    return sol;
}

}  // namespace

double positive_part_pairing(const Trajectory& u, const Trajectory& density, const Trajectory& obstacle) {
    return pairing(u, density, obstacle, true);
}

double disjointness_violation(const Trajectory& u, const Trajectory& obstacle) {
    double worst = 0.0;
    auto ud = u.data();
    auto ld = obstacle.data();
    for (std::size_t i = 0; i < ud.size(); ++i) {
        const double d = ud[i] - ld[i];
        worst = std::max(worst, std::abs(std::max(d, 0.0) * std::max(-d, 0.0)));
    }
    return worst;
}

double complementarity_residual(const PenalizedSolution& sol) {
    return pairing(sol.traj, sol.penalty_density, *sol.obstacle, false);
}

double complementarity_residual(const SkeletonSolution& sol) {
    return pairing(sol.traj, sol.measure_density, *sol.obstacle, false);
}

PenalizedSolution solve_penalized(const Stepper& stepper, const Control& control, double n) {
    require_compatible(stepper.problem(), control, stepper.mesh());
    auto r = stepper.run(ObstacleTreatment::penalty, n, control.values(), {}, 0.0);
    return package(stepper, control, n, std::move(r));
}

PenalizedSolution solve_penalized(const ProblemSpec& problem, const Control& control, double n,
                                  const TimeMesh& mesh) {
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    return solve_penalized(stepper, control, n);
}

SkeletonSolution solve_projected(const Stepper& stepper, const Control& control) {
    require_compatible(stepper.problem(), control, stepper.mesh());
    auto r = stepper.run(ObstacleTreatment::projection, 0.0, control.values(), {}, 0.0);
    SkeletonSolution sol;
    sol.traj = std::move(r.traj);
    sol.measure_density = std::move(r.density);
    sol.obstacle = stepper.obstacle();
    sol.diagnostics = diagnostics(sol.traj, *sol.obstacle);
    return sol;
}

SkeletonSolution solve_projected(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh) {
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    return solve_projected(stepper, control);
}

SkeletonSolution solve_skeleton(const Stepper& stepper, const Control& control, const SkeletonOptions& opts) {
    if (!(opts.n0 > 0.0) || !(opts.n_max >= opts.n0) || !(opts.tol > 0.0)) {
        throw ConfigError("skeleton options need 0 < n0 <= n_max and tol > 0");
    }
    double n = opts.n0;
    PenalizedSolution prev = solve_penalized(stepper, control, n);
    SkeletonSolution out;
    out.history.push_back({n, std::numeric_limits<double>::quiet_NaN(), complementarity_residual(prev),
                           prev.diagnostics.penalty_l2});
    out.converged = false;
    while (2.0 * n <= opts.n_max) {
        n *= 2.0;
        PenalizedSolution next = solve_penalized(stepper, control, n);
        const double gap = ht_distance(next.traj, prev.traj);
        out.history.push_back({n, gap, complementarity_residual(next), next.diagnostics.penalty_l2});
        out.cauchy_gap = gap;
        prev = std::move(next);
        if (gap < opts.tol) {
            out.converged = true;
            break;
        }
    }
    out.traj = std::move(prev.traj);
    out.measure_density = std::move(prev.penalty_density);
    out.obstacle = prev.obstacle;
    out.n_final = n;
    out.diagnostics = prev.diagnostics;
    if (!out.converged) {
        std::ostringstream os;
        os << "penalization did not converge: Cauchy gap " << out.cauchy_gap << " >= tol " << opts.tol
           << " at n = " << n;
        out.warning = os.str();
    }
    return out;
}

SkeletonSolution solve_skeleton(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh,
                                const SkeletonOptions& opts) {
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    return solve_skeleton(stepper, control, opts);
}

double penalty_l2_estimate(const ProblemSpec& problem, const std::vector<Control>& controls, double n,
                           const TimeMesh& mesh) {
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    double best = 0.0;
    for (const auto& k : controls) {
        const auto sol = solve_penalized(stepper, k, n);
        const double l2 = sol.diagnostics.penalty_l2;
        best = std::max(best, n * l2 * l2);
    }
    return best;
}

}  // namespace oblab
