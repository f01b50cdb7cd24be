#include "oblab/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oblab/error.hpp"
#include "oblab/rng.hpp"

namespace oblab {

std::size_t PathEnsemble::survival(std::size_t p) const {
    const std::size_t len = mesh.n_steps + 1;
    const double te = exit_times[p];
    for (std::size_t i = 0; i < len; ++i) {
        if (mesh.time(i) >= te) return i;
    }
    return len;
}

PathEnsemble make_ensemble(std::size_t n_paths, const TimeMesh& mesh, double x_min, double x_max,
                           std::uint64_t seed, double diffusion) {
    if (n_paths == 0) throw DomainError("ensemble needs at least one path");
    if (!(diffusion > 0.0)) throw DomainError("ensemble diffusion must be > 0");
    PathEnsemble e;
    e.n_paths = n_paths;
    e.mesh = mesh;
    e.x_min = x_min;
    e.x_max = x_max;
    e.diffusion = diffusion;
    e.seed = seed;
    e.start_points.resize(n_paths);
    const std::size_t len = mesh.n_steps + 1;
    e.paths.resize(n_paths * len);
    e.exit_times.assign(n_paths, std::numeric_limits<double>::infinity());
    const double sd = std::sqrt(2.0 * diffusion * mesh.dt());
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto pc = static_cast<std::uint32_t>(p);
        const double u = rng::uniform(seed, rng::counter(pc, 0, rng::Tag::ensemble_start));
        double w = x_min + (x_max - x_min) * u;
        e.start_points[p] = w;
        e.paths[p * len] = w;
        for (std::size_t i = 0; i < mesh.n_steps; ++i) {
            w += sd * rng::normal(seed, rng::counter(pc, static_cast<std::uint32_t>(i), rng::Tag::ensemble_step));
            e.paths[p * len + i + 1] = w;
            if ((w < x_min || w > x_max) && e.exit_times[p] == std::numeric_limits<double>::infinity()) {
                e.exit_times[p] = mesh.time(i + 1);
            }
        }
    }
    return e;
}

PathEnsemble coarsen(const PathEnsemble& fine, std::size_t factor) {
    if (factor == 0 || fine.mesh.n_steps % factor != 0) throw DomainError("coarsening factor must divide n_steps");
    PathEnsemble c = fine;
    c.mesh = TimeMesh::uniform(fine.mesh.horizon, fine.mesh.n_steps / factor);
    const std::size_t flen = fine.mesh.n_steps + 1;
    const std::size_t clen = c.mesh.n_steps + 1;
    c.paths.assign(fine.n_paths * clen, 0.0);
    for (std::size_t p = 0; p < fine.n_paths; ++p) {
        for (std::size_t i = 0; i < clen; ++i) c.paths[p * clen + i] = fine.paths[p * flen + i * factor];
    }
    return c;
}

double interpolate(const Grid& grid, std::span<const double> row, double x) {
    const double h = grid.spacing();
    const double s = std::clamp((x - grid.x_min) / h, 0.0, static_cast<double>(grid.n_nodes - 1));
    std::size_t i = static_cast<std::size_t>(s);
    if (i >= grid.n_nodes - 1) i = grid.n_nodes - 2;
    const double a = s - static_cast<double>(i);
    return (1.0 - a) * row[i] + a * row[i + 1];
}

BsdeResidual bsde_residual(const ProblemSpec& problem, const PenalizedSolution& sol, const PathEnsemble& ens) {
    const Grid& grid = sol.traj.grid();
    const TimeMesh& mesh = sol.traj.mesh();
    require_same_grid(problem.grid, grid, "bsde_residual");
    require_same_mesh(mesh, ens.mesh, "bsde_residual");
    if (std::abs(ens.diffusion - 0.5) > 1e-15) throw DomainError("bsde_residual needs standard Brownian paths (diffusion 1/2)");
    const auto& co = problem.coefficients;
    const std::size_t n = grid.n_nodes;
    const std::size_t N = mesh.n_steps;
    const std::size_t J = co.n_modes();
    const double dt = mesh.dt();
    const bool has_control = sol.control.n_modes() == J && sol.control.n_rows() == N && !sol.control.is_zero();

    // Grid rows of Z and of the drift f + h.k + nu + div g at each t_i.
    Trajectory z(grid, mesh), drift(grid, mesh);
    std::vector<double> gv(n), divg(n);
    for (std::size_t i = 0; i < N; ++i) {
        const double t = mesh.time(i);
        auto u = sol.traj.row(i);
        auto zr = z.row(i);
        gradient_into(grid, u, zr);
        auto dr = drift.row(i);
        auto nu = sol.penalty_density.row(i);
        double kc = 0.0;
        if (has_control) {
            for (std::size_t j = 0; j < J; ++j) kc += co.mode_weights[j] * sol.control(i, j);
        }
        for (std::size_t x = 0; x < n; ++x) {
            const double xv = grid.node(x);
            double d = nu[x];
            if (co.f) d += co.f(t, xv, u[x], zr[x]);
            if (co.h_shape && kc != 0.0) d += kc * co.h_shape(t, xv, u[x], zr[x]);
            if (co.g) gv[x] = co.g(t, xv, u[x], zr[x]);
            dr[x] = d;
        }
        if (co.g) {
            gradient_into(grid, gv, divg);
            for (std::size_t x = 0; x < n; ++x) dr[x] += divg[x];
        }
    }

    BsdeResidual out;
    double sum_sq = 0.0;
    std::size_t exited = 0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const std::size_t alive = ens.survival(p);
        if (alive <= N) ++exited;
        bool used = false;
        for (std::size_t i = 0; i + 1 < alive && i < N; ++i) {
            const double w0 = ens(p, i);
            const double w1 = ens(p, i + 1);
            const double y0 = interpolate(grid, sol.traj.row(i), w0);
            const double y1 = interpolate(grid, sol.traj.row(i + 1), w1);
            const double zi = interpolate(grid, z.row(i), w0);
            const double di = interpolate(grid, drift.row(i), w0);
            const double r = y0 - (y1 + di * dt - zi * (w1 - w0));
            sum_sq += r * r;
            ++out.n_terms;
            used = true;
        }
        if (used) ++out.n_paths_used;
    }
    if (out.n_terms == 0) throw DomainError("bsde_residual: no path survives inside the box");
    out.rms = std::sqrt(sum_sq / static_cast<double>(out.n_terms)) / std::sqrt(dt);
    out.exit_fraction = static_cast<double>(exited) / static_cast<double>(ens.n_paths);
    return out;
}

StarCheck star_integral_check(const std::function<double(double, double)>& J,
                              const std::function<double(double, double)>& div_J, const PathEnsemble& ens) {
    const TimeMesh& mesh = ens.mesh;
    const std::size_t N = mesh.n_steps;
    const double dt = mesh.dt();
    StarCheck out;
    out.n_paths = ens.n_paths;
    double sum = 0.0, sum_sq = 0.0, sum_abs = 0.0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        double fwd = 0.0, bwd = 0.0, div = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double w0 = ens(p, i);
            const double w1 = ens(p, i + 1);
            const double dw = w1 - w0;
            fwd += J(mesh.time(i), w0) * dw;
            bwd -= J(mesh.time(i + 1), w1) * dw;
            div += div_J(mesh.time(i), w0);
        }
        const double gap = (fwd + bwd) - (-2.0 * ens.diffusion * div * dt);
        sum += gap;
        sum_sq += gap * gap;
        sum_abs += std::abs(gap);
    }
    const double m = static_cast<double>(ens.n_paths);
    out.mean_gap = sum / m;
    out.mean_abs_gap = sum_abs / m;
    const double var = m > 1 ? std::max(0.0, (sum_sq - m * out.mean_gap * out.mean_gap) / (m - 1.0)) : 0.0;
    out.std_error = std::sqrt(var / m);
    return out;
}

namespace {

EnergyStats path_energy(const PenalizedSolution& sol, const PathEnsemble& ens) {
    const Grid& grid = sol.traj.grid();
    const TimeMesh& mesh = sol.traj.mesh();
    require_same_mesh(mesh, ens.mesh, "family_energy");
    const std::size_t N = mesh.n_steps;
    const double dt = mesh.dt();
    Trajectory z(grid, mesh);
    for (std::size_t i = 0; i <= N; ++i) gradient_into(grid, sol.traj.row(i), z.row(i));
    EnergyStats s;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const std::size_t alive = std::min(ens.survival(p), N + 1);
        double sup_y = 0.0, int_z = 0.0, mass = 0.0;
        for (std::size_t i = 0; i < alive; ++i) {
            const double w = ens(p, i);
            const double y = interpolate(grid, sol.traj.row(i), w);
            sup_y = std::max(sup_y, y * y);
            if (i < N) {
                const double zz = interpolate(grid, z.row(i), w);
                int_z += zz * zz * dt;
                mass += interpolate(grid, sol.penalty_density.row(i), w) * dt;
            }
        }
        s.sup_y_sq += sup_y;
        s.int_z_sq += int_z;
        s.penalty_mass_sq += mass * mass;
    }
    const double scale = ens.box_volume() / static_cast<double>(ens.n_paths);
    s.sup_y_sq *= scale;
    s.int_z_sq *= scale;
    s.penalty_mass_sq *= scale;
    return s;
}

double safe_ratio(double hi, double lo) {
    if (hi == 0.0) return 1.0;
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

EnergyReport family_energy(const std::vector<PenalizedSolution>& family, const PathEnsemble& ens) {
    EnergyReport rep;
    if (family.empty()) return rep;
    for (const auto& sol : family) rep.members.push_back(path_energy(sol, ens));
    rep.max = rep.min = rep.members.front();
    for (const auto& m : rep.members) {
        rep.max.sup_y_sq = std::max(rep.max.sup_y_sq, m.sup_y_sq);
        rep.max.int_z_sq = std::max(rep.max.int_z_sq, m.int_z_sq);
        rep.max.penalty_mass_sq = std::max(rep.max.penalty_mass_sq, m.penalty_mass_sq);
        rep.min.sup_y_sq = std::min(rep.min.sup_y_sq, m.sup_y_sq);
        rep.min.int_z_sq = std::min(rep.min.int_z_sq, m.int_z_sq);
        rep.min.penalty_mass_sq = std::min(rep.min.penalty_mass_sq, m.penalty_mass_sq);
        rep.all_finite = rep.all_finite && std::isfinite(m.sup_y_sq) && std::isfinite(m.int_z_sq) &&
                         std::isfinite(m.penalty_mass_sq);
    }
    rep.ratio = {safe_ratio(rep.max.sup_y_sq, rep.min.sup_y_sq), safe_ratio(rep.max.int_z_sq, rep.min.int_z_sq),
                 safe_ratio(rep.max.penalty_mass_sq, rep.min.penalty_mass_sq)};
    return rep;
}

double path_shortfall_l4(const PenalizedSolution& sol, const PathEnsemble& ens) {
    const Grid& grid = sol.traj.grid();
    const TimeMesh& mesh = sol.traj.mesh();
    require_same_mesh(mesh, ens.mesh, "path_shortfall_l4");
    const std::size_t N = mesh.n_steps;
    std::vector<double> acc(N, 0.0);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const std::size_t alive = std::min(ens.survival(p), N);
        for (std::size_t i = 0; i < alive; ++i) {
            const double w = ens(p, i);
            const double d = std::min(interpolate(grid, sol.traj.row(i), w) - interpolate(grid, sol.obstacle->row(i), w), 0.0);
            acc[i] += (d * d) * (d * d);
        }
    }
    const double scale = ens.box_volume() / static_cast<double>(ens.n_paths);
    double best = 0.0;
    for (double a : acc) best = std::max(best, a * scale);
    return best;
}

}  // namespace oblab
