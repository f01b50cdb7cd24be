#include "oblab/march.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/kernels.hpp"

namespace oblab {

Stepper::Factor Stepper::factor(double theta, double dt, double h, std::size_t m) {
    // Thomas factorisation of tridiag(a, b, a) on the m interior unknowns.
    Factor f;
    f.theta = theta;
    const double b = 1.0 + theta * dt / (h * h);
    f.off_diag = -0.5 * theta * dt / (h * h);
    f.upper.resize(m);
    f.inv_pivot.resize(m);
    double pivot = b;
    for (std::size_t i = 0; i < m; ++i) {
        if (i > 0) pivot = b - f.off_diag * f.upper[i - 1];
        f.inv_pivot[i] = 1.0 / pivot;
        f.upper[i] = f.off_diag * f.inv_pivot[i];
    }
    return f;
}

Stepper::Stepper(const ProblemSpec& problem, const TimeMesh& mesh, const DiffusionScheme& scheme)
    : problem_(&problem), mesh_(mesh), scheme_(scheme) {
    if (!(scheme.theta >= 0.5 && scheme.theta <= 1.0)) throw ConfigError("diffusion theta must lie in [1/2, 1]");
    const Grid& grid = problem.grid;
    const double dt = mesh.dt();
    const double h = grid.spacing();
    const auto& lip = problem.coefficients.lipschitz;
    if (problem.coefficients.g && dt * lip.alpha / (h * h) > 1.0) {
        std::ostringstream os;
        os << "time step too large for the explicit flux term: dt*alpha/h^2 = "
           << dt * lip.alpha / (h * h) << " > 1 (dt=" << dt << ", h=" << h << ")";
        throw ConfigError(os.str());
    }
    if (problem.coefficients.f && dt * lip.c_f > 1.0) {
        std::ostringstream os;
        os << "time step too large for the explicit reaction term: dt*c_f = " << dt * lip.c_f << " > 1";
        throw ConfigError(os.str());
    }

    const std::size_t n = grid.n_nodes;
    auto obs = std::make_shared<Trajectory>(grid, mesh);
    if (problem.obstacle.time_independent) {
        auto first = obs->row(0);
        for (std::size_t i = 0; i < n; ++i) first[i] = problem.obstacle.value(0.0, grid.node(i));
        for (std::size_t r = 1; r < mesh.n_nodes(); ++r) std::copy(first.begin(), first.end(), obs->row(r).begin());
    } else {
        for (std::size_t r = 0; r < mesh.n_nodes(); ++r) {
            const double t = mesh.time(r);
            auto row = obs->row(r);
            for (std::size_t i = 0; i < n; ++i) row[i] = problem.obstacle.value(t, grid.node(i));
        }
    }
    obstacle_ = std::move(obs);
    const Field phi = terminal_field(problem);
    terminal_.assign(phi.values().begin(), phi.values().end());

    startup_ = factor(1.0, dt, h, n - 2);
    main_ = factor(scheme.theta, dt, h, n - 2);
}

MarchResult Stepper::run(ObstacleTreatment treatment, double n_pen, std::span<const double> control,
                         std::span<const double> noise, double sqrt_eps) const {
    const ProblemSpec& p = *problem_;
    const Grid& grid = p.grid;
    const auto& co = p.coefficients;
    const std::size_t n = grid.n_nodes;
    const std::size_t N = mesh_.n_steps;
    const std::size_t J = co.n_modes();
    const double dt = mesh_.dt();

    const bool use_control = !control.empty();
    const bool use_noise = sqrt_eps != 0.0;
    if (use_control && control.size() != N * J) throw DomainError("control shape does not match mesh and modes");
    if (use_noise && noise.size() != N * J) throw DomainError("noise shape does not match mesh and modes");
    if (treatment == ObstacleTreatment::penalty && !(n_pen >= 0.0)) throw ConfigError("penalty parameter must be >= 0");

    const bool use_h = co.h_shape && (use_control || use_noise);
    const bool need_grad = co.f || co.g || use_h;

    MarchResult out{Trajectory(grid, mesh_), Trajectory(grid, mesh_)};
    std::vector<double> w(terminal_);
    std::copy(w.begin(), w.end(), out.traj.row(N).begin());

    std::vector<double> grad(n), fv(n), gv(n), divg(n), shape(n), rhs(n), lap(n);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = grid.node(i);
    const auto& k = kernels::active();
    const std::size_t m = n - 2;

    for (std::size_t s = 0; s < N; ++s) {
        const std::size_t cur = N - s;
        const std::size_t nxt = cur - 1;
        const double t = mesh_.time(cur);

        const Factor& fac = s < scheme_.startup_steps ? startup_ : main_;
        std::copy(w.begin(), w.end(), rhs.begin());
        if (fac.theta < 1.0) {
            laplacian_into(grid, w, lap);
            k.axpy(0.5 * (1.0 - fac.theta) * dt, lap, rhs);
        }
        if (need_grad) {
            gradient_into(grid, w, grad);
            for (std::size_t i = 0; i < n; ++i) {
                if (co.f) fv[i] = co.f(t, xs[i], w[i], grad[i]);
                if (co.g) gv[i] = co.g(t, xs[i], w[i], grad[i]);
                if (use_h) shape[i] = co.h_shape(t, xs[i], w[i], grad[i]);
            }
            if (co.f) k.axpy(dt, fv, rhs);
            if (co.g) {
                gradient_into(grid, gv, divg);
                k.axpy(dt, divg, rhs);
            }
            if (use_h) {
                double a = 0.0;
                if (use_control) {
                    double kc = 0.0;
                    for (std::size_t j = 0; j < J; ++j) kc += co.mode_weights[j] * control[nxt * J + j];
                    a += dt * kc;
                }
                if (use_noise) {
                    double bc = 0.0;
                    for (std::size_t j = 0; j < J; ++j) bc += co.mode_weights[j] * noise[nxt * J + j];
                    a += sqrt_eps * bc;
                }
                k.axpy(a, shape, rhs);
            }
        }

        // (I - theta dt/2 D2) w = rhs with w = 0 on the boundary.
        w[0] = 0.0;
        w[n - 1] = 0.0;
        double prev = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            prev = (rhs[i + 1] - fac.off_diag * prev) * fac.inv_pivot[i];
            w[i + 1] = prev;
        }
        for (std::size_t i = m - 1; i-- > 0;) w[i + 1] -= fac.upper[i] * w[i + 2];

        auto interior = std::span<double>(w).subspan(1, m);
        auto obs = obstacle_row(nxt).subspan(1, m);
        auto dens = out.density.row(nxt).subspan(1, m);
        if (treatment == ObstacleTreatment::penalty) {
            k.penalty_update(interior, obs, n_pen, n_pen * dt, interior, dens);
        } else {
            k.project(interior, obs, 1.0 / dt, interior, dens);
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(w[i])) {
                std::ostringstream os;
                os << "non-finite state at step " << s << " (t=" << mesh_.time(nxt) << ", node " << i << ")";
                throw DivergenceError(os.str(), s);
            }
        }
        std::copy(w.begin(), w.end(), out.traj.row(nxt).begin());
    }
    return out;
}

}  // namespace oblab
