#include "oblab/spde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/parallel.hpp"
#include "oblab/rng.hpp"
#include "oblab/skeleton.hpp"

namespace oblab {

NoisePath sample_noise(std::size_t n_steps, std::size_t n_modes, double dt, std::uint64_t seed) {
    if (n_steps == 0 || n_modes == 0) throw DomainError("noise needs n_steps, J >= 1");
    if (!(dt > 0.0)) throw DomainError("noise needs dt > 0");
    NoisePath p{n_steps, n_modes, dt, seed, std::vector<double>(n_steps * n_modes)};
    const double sd = std::sqrt(dt);
    for (std::size_t i = 0; i < n_steps; ++i) {
        for (std::size_t j = 0; j < n_modes; ++j) {
            const auto ctr = rng::counter(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), rng::Tag::noise);
            p.increments[i * n_modes + j] = sd * rng::normal(seed, ctr);
        }
    }
    return p;
}

StochasticSolution solve_spde(const Stepper& stepper, double epsilon, double n, const NoisePath& noise,
                              const Control* control) {
    const auto& problem = stepper.problem();
    const auto& mesh = stepper.mesh();
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (noise.n_steps != mesh.n_steps || noise.n_modes != problem.coefficients.n_modes()) {
        throw DomainError("noise shape does not match mesh and mode count");
    }
    if (std::abs(noise.dt - mesh.dt()) > 1e-12 * mesh.dt()) throw DomainError("noise dt does not match mesh");
    std::span<const double> kv;
    if (control) {
        require_compatible(problem, *control, mesh);
        kv = control->values();
    }
    auto r = stepper.run(ObstacleTreatment::penalty, n, kv, noise.increments, std::sqrt(epsilon));
    StochasticSolution sol;
    sol.traj = std::move(r.traj);
    sol.penalty_density = std::move(r.density);
    sol.obstacle = stepper.obstacle();
    sol.epsilon = epsilon;
    if (control) sol.control = *control;
    sol.noise_seed = noise.seed;
    return sol;
}

StochasticSolution solve_spde(const ProblemSpec& problem, double epsilon, double n, const TimeMesh& mesh,
                              const NoisePath& noise, const std::optional<Control>& control) {
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    return solve_spde(stepper, epsilon, n, noise, control ? &*control : nullptr);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = x.size();
    if (m < 2 || y.size() != m) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double md = static_cast<double>(m);
    return (md * sxy - sx * sy) / (md * sxx - sx * sx);
}

ConditionIReport condition_i_distance(const ProblemSpec& problem, const std::vector<double>& epsilons,
                                      const std::vector<Control>& family, double n, const TimeMesh& mesh,
                                      std::size_t n_samples, std::uint64_t seed,
                                      const std::vector<double>& deltas, std::size_t workers) {
    if (family.empty()) throw ConfigError("condition (i) needs a non-empty control family");
    if (n_samples == 0) throw ConfigError("condition (i) needs n_samples >= 1");
    require_valid(problem);
    const Stepper stepper(problem, mesh);
    const std::size_t J = problem.coefficients.n_modes();

    ConditionIReport rep;
    rep.deltas = deltas;
    for (const auto& k : family) rep.control_radius_sq = std::max(rep.control_radius_sq, k.norm_sq());

    // Z does not depend on the noise path.
    std::vector<Trajectory> z_traj;
    const NoisePath quiet{mesh.n_steps, J, mesh.dt(), 0, std::vector<double>(mesh.n_steps * J, 0.0)};
    for (const auto& k : family) z_traj.push_back(solve_spde(stepper, 0.0, n, quiet, &k).traj);

    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const double eps = epsilons[e];
        std::vector<double> dist(n_samples, std::numeric_limits<double>::quiet_NaN());
        std::vector<std::uint64_t> seeds(n_samples);
        parallel_for(n_samples, workers, [&](std::size_t s) {
            const std::uint64_t sample_seed = rng::derive_seed(seed, s);
            seeds[s] = sample_seed;
            const std::size_t which = s % family.size();
            try {
                const auto noise = sample_noise(mesh.n_steps, J, mesh.dt(), sample_seed);
                const auto y = solve_spde(stepper, eps, n, noise, &family[which]);
                dist[s] = ht_distance(y.traj, z_traj[which]);
            } catch (const Error&) {
                // recorded below through the NaN slot
            }
        });
        ConditionIStats st;
        st.epsilon = eps;
        st.tail_probability.assign(deltas.size(), 0.0);
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t s = 0; s < n_samples; ++s) {
            if (std::isnan(dist[s])) {
                st.failed_seeds.push_back(seeds[s]);
                continue;
            }
            ++st.n_ok;
            sum += dist[s];
            sum_sq += dist[s] * dist[s];
            for (std::size_t d = 0; d < deltas.size(); ++d) {
                if (dist[s] > deltas[d]) st.tail_probability[d] += 1.0;
            }
        }
        if (st.n_ok > 0) {
            const double m = static_cast<double>(st.n_ok);
            st.mean = sum / m;
            st.variance = st.n_ok > 1 ? std::max(0.0, (sum_sq - m * st.mean * st.mean) / (m - 1.0)) : 0.0;
            st.std_error = std::sqrt(st.variance / m);
            for (double& p : st.tail_probability) p /= m;
        }
        rep.per_epsilon.push_back(std::move(st));
    }
    std::vector<double> xs, ys;
    for (const auto& st : rep.per_epsilon) {
        if (st.mean > 0.0) {
            xs.push_back(st.epsilon);
            ys.push_back(st.mean);
        }
    }
    rep.slope = loglog_slope(xs, ys);
    return rep;
}

}  // namespace oblab
