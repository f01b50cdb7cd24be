#include "oblab/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/parallel.hpp"
#include "oblab/rng.hpp"
#include "oblab/spde.hpp"

namespace oblab {

// ---------------------------------------------------------------------------
// Events

TargetEvent TargetEvent::terminal_ball(Field center, double radius) {
    TargetEvent e;
    e.kind = Kind::terminal_ball;
    e.center = std::move(center);
    e.radius = radius;
    return e;
}

TargetEvent TargetEvent::sup_exceed(double level, std::size_t probe_node) {
    TargetEvent e;
    e.kind = Kind::sup_exceed;
    e.level = level;
    e.probe_node = probe_node;
    return e;
}

void TargetEvent::check(const Grid& grid) const {
    if (kind == Kind::terminal_ball) {
        require_same_grid(grid, center.grid(), "terminal_ball center");
        if (!(radius > 0.0)) throw DomainError("terminal_ball radius must be > 0");
    } else if (probe_node >= grid.n_nodes) {
        throw DomainError("sup_exceed probe node is off the grid");
    }
}

double TargetEvent::excess(const Trajectory& u) const {
    if (kind == Kind::terminal_ball) {
        if (std::isinf(radius)) return -std::numeric_limits<double>::infinity();
        auto r0 = u.row(0);
        std::vector<double> diff(r0.size());
        for (std::size_t i = 0; i < r0.size(); ++i) diff[i] = r0[i] - center[i];
        return h_norm(u.grid(), diff) - radius;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < u.n_times(); ++t) best = std::max(best, u.row(t)[probe_node]);
    return level - best;
}

double TargetEvent::penalty(const Trajectory& u) const {
    const double e = std::max(excess(u), 0.0);
    return e * e;
}

double rate_functional(const Control& k) { return 0.5 * k.norm_sq(); }

std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = x.size();
    if (m == 0) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    if (m == 1) return {y[0], 0.0};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double md = static_cast<double>(m);
    const double b = (md * sxy - sx * sy) / (md * sxx - sx * sx);
    return {(sy - b * sx) / md, b};
}

// ---------------------------------------------------------------------------
// Objective

RateObjective::RateObjective(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event,
                             double penalty_n)
    : problem_(&problem), stepper_(problem, mesh), event_(event), n_(penalty_n) {
    event_.check(problem.grid);
}

Trajectory RateObjective::solve(const Control& k) const {
    return stepper_.run(ObstacleTreatment::penalty, n_, k.values(), {}, 0.0).traj;
}

double RateObjective::operator()(const Control& k, double lambda) const {
    return rate_functional(k) + lambda * event_.penalty(solve(k));
}

void RateObjective::gradient(const Control& k, double lambda, double f0, double rel_step,
                             std::vector<double>& grad, std::size_t workers) const {
    const std::size_t dim = k.values().size();
    grad.assign(dim, 0.0);
    parallel_for(dim, workers, [&](std::size_t i) {
        Control kp = k;
        const double step = rel_step * std::max(1.0, std::abs(k.values()[i]));
        kp.values()[i] += step;
        const double actual = kp.values()[i] - k.values()[i];
        grad[i] = ((*this)(kp, lambda) - f0) / actual;
    });
}

void RateObjective::central_gradient(const Control& k, double lambda, double rel_step,
                                     std::vector<double>& grad) const {
    const std::size_t dim = k.values().size();
    grad.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        const double step = rel_step * std::max(1.0, std::abs(k.values()[i]));
        Control kp = k, km = k;
        kp.values()[i] += step;
        km.values()[i] -= step;
        grad[i] = ((*this)(kp, lambda) - (*this)(km, lambda)) / (kp.values()[i] - km.values()[i]);
    }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

RateResult minimize_rate(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event,
                         const std::vector<double>& lambda_schedule, const Control& init, const OptConfig& opt) {
    require_valid(problem);
    require_compatible(problem, init, mesh);
    event.check(problem.grid);
    if (lambda_schedule.empty()) throw ConfigError("lambda schedule is empty");

    RateResult res;
    res.penalty_n = opt.penalty_n;
    if (res.penalty_n <= 0.0) res.penalty_n = solve_skeleton(problem, init, mesh, opt.skeleton).n_final;
    const RateObjective obj(problem, mesh, event, res.penalty_n);

    Control k = init;
    const std::size_t dim = k.values().size();
    std::vector<double> g(dim), g_new(dim), s(dim), y(dim);
    Control best;
    double best_rate = std::numeric_limits<double>::infinity();
    double best_residual = std::numeric_limits<double>::infinity();
    std::size_t stagnant = 0;
    double prev_stage_obj = std::numeric_limits<double>::quiet_NaN();

    for (double lambda : lambda_schedule) {
        LambdaStage stage;
        stage.lambda = lambda;
        double f = obj(k, lambda);
        obj.gradient(k, lambda, f, opt.fd_rel_step, g, opt.workers);
        double alpha = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
        bool have_bb = false;
        for (std::size_t it = 0; it < opt.max_iter; ++it) {
            const double gg = dot(g, g);
            if (std::sqrt(gg) < opt.grad_tol) break;
            if (have_bb) {
                const double sy = dot(s, y);
                alpha = sy > 0.0 ? dot(s, s) / sy : 2.0 * alpha;
            }
            Control trial = k;
            double f_trial = f;
            bool accepted = false;
            for (int bt = 0; bt < 60; ++bt) {
                for (std::size_t i = 0; i < dim; ++i) trial.values()[i] = k.values()[i] - alpha * g[i];
                f_trial = obj(trial, lambda);
                if (f_trial <= f - opt.armijo * alpha * gg) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            ++stage.iterations;
            if (!accepted) break;
            const double decrease = f - f_trial;
            obj.gradient(trial, lambda, f_trial, opt.fd_rel_step, g_new, opt.workers);
            for (std::size_t i = 0; i < dim; ++i) {
                s[i] = trial.values()[i] - k.values()[i];
                y[i] = g_new[i] - g[i];
            }
            have_bb = true;
            k = std::move(trial);
            f = f_trial;
            g.swap(g_new);
            if (decrease <= 1e-15 * std::max(1.0, std::abs(f))) break;
        }
        const Trajectory u = obj.solve(k);
        stage.rate = rate_functional(k);
        stage.residual = std::max(event.excess(u), 0.0);
        stage.feasible = stage.residual <= opt.feasibility_tol;
        stage.objective = f;
        if (stage.feasible && stage.rate < best_rate) {
            best_rate = stage.rate;
            best_residual = stage.residual;
            best = k;
        }
        stage.best_feasible_rate = best_rate;
        res.lambda_history.push_back(stage);

        if (!std::isnan(prev_stage_obj) &&
            std::abs(prev_stage_obj - f) < 1e-10 * std::max(1.0, std::abs(prev_stage_obj))) {
            ++stagnant;
        } else {
            stagnant = 0;
        }
        prev_stage_obj = f;
    }
    if (stagnant >= 3) res.warning = "optimizer stagnated across the lambda schedule";

    if (std::isfinite(best_rate)) {
        res.minimizer = best;
        res.rate = best_rate;
        res.constraint_residual = best_residual;
        res.feasible = true;
    } else {
        res.minimizer = k;
        res.rate = std::numeric_limits<double>::infinity();
        res.constraint_residual = res.lambda_history.back().residual;
        res.feasible = false;
        if (res.warning.empty()) res.warning = "no feasible iterate; event treated as unreachable";
    }
    return res;
}

// ---------------------------------------------------------------------------
// Condition (ii)

ConditionIIReport condition_ii_test(const ProblemSpec& problem, const TimeMesh& mesh, const Control& k,
                                    const std::vector<double>& amplitudes, const std::vector<int>& frequencies,
                                    const std::function<double(double)>& witness, double radius_sq,
                                    const SkeletonOptions& opts) {
    require_valid(problem);
    require_compatible(problem, k, mesh);
    const double T = mesh.horizon;
    std::vector<Control> perturbed;
    for (double a : amplitudes) {
        for (int m : frequencies) {
            Control km = k;
            const Control wave = Control::from_function(mesh, k.n_modes(), [&](double t, std::size_t j) {
                return j == 0 ? a * std::sin(2.0 * std::numbers::pi * m * t / T) : 0.0;
            });
            km += wave;
            if (!km.in_ball(radius_sq)) {
                std::ostringstream os;
                os << "perturbed control (a=" << a << ", m=" << m << ") has norm^2 " << km.norm_sq()
                   << " outside S_N with N=" << radius_sq;
                throw ConfigError(os.str());
            }
            perturbed.push_back(std::move(km));
        }
    }
    const Stepper stepper(problem, mesh);
    const auto base = solve_skeleton(stepper, k, opts);
    ConditionIIReport rep;
    std::size_t idx = 0;
    for (double a : amplitudes) {
        double prev = std::numeric_limits<double>::infinity();
        for (int m : frequencies) {
            const Control& km = perturbed[idx++];
            const auto sol = solve_skeleton(stepper, km, opts);
            ConditionIIEntry e;
            e.amplitude = a;
            e.frequency = m;
            e.distance = ht_distance(sol.traj, base.traj);
            e.norm_sq = km.norm_sq();
            double w = 0.0;
            for (std::size_t i = 0; i < mesh.n_steps; ++i) {
                const double t = (static_cast<double>(i) + 0.5) * mesh.dt();
                w += std::sin(2.0 * std::numbers::pi * m * t / T) * witness(t);
            }
            e.witness = std::abs(w * mesh.dt());
            const bool ok = e.distance < prev || (e.distance == 0.0 && prev == 0.0);
            rep.monotone = rep.monotone && ok;
            prev = e.distance;
            rep.entries.push_back(e);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo

McReport mc_ldp_compare(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event,
                        const std::vector<double>& epsilons, std::size_t n_samples, std::uint64_t seed,
                        bool use_importance, const RateResult& rate, double penalty_n, std::size_t workers) {
    require_valid(problem);
    event.check(problem.grid);
    if (n_samples == 0) throw ConfigError("mc_ldp_compare needs n_samples >= 1");
    if (use_importance) {
        if (!rate.feasible) throw ConfigError("importance sampling needs a feasible rate minimizer");
        require_compatible(problem, rate.minimizer, mesh);
    }
    const Stepper stepper(problem, mesh);
    const std::size_t J = problem.coefficients.n_modes();

    McReport rep;
    rep.importance = use_importance;
    rep.rate = rate.rate;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const double eps = epsilons[e];
        if (!(eps > 0.0)) throw ConfigError("epsilon must be > 0");
        const double root = std::sqrt(eps);
        const std::uint64_t eps_seed = rng::derive_seed(seed, e);
        std::vector<double> x(n_samples, 0.0);
        std::vector<unsigned char> hit(n_samples, 0);
        parallel_for(n_samples, workers, [&](std::size_t s) {
            const auto noise = sample_noise(mesh.n_steps, J, mesh.dt(), rng::derive_seed(eps_seed, s));
            const Control* shift = use_importance ? &rate.minimizer : nullptr;
            const auto sol = solve_spde(stepper, eps, penalty_n, noise, shift);
            if (!event.contains(sol.traj)) return;
            hit[s] = 1;
            if (!use_importance) {
                x[s] = 1.0;
                return;
            }
            double cross = 0.0;
            for (std::size_t i = 0; i < noise.increments.size(); ++i) cross += rate.minimizer.values()[i] * noise.increments[i];
            x[s] = std::exp(-cross / root - rate.minimizer.norm_sq() / (2.0 * eps));
        });
        McEpsilonStats st;
        st.epsilon = eps;
        st.n_samples = n_samples;
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t s = 0; s < n_samples; ++s) {
            st.hits += hit[s];
            sum += x[s];
            sum_sq += x[s] * x[s];
        }
        const double m = static_cast<double>(n_samples);
        st.p_hat = sum / m;
        st.variance_is = n_samples > 1 ? std::max(0.0, (sum_sq - m * st.p_hat * st.p_hat) / (m - 1.0)) : 0.0;
        st.variance_plain = st.p_hat * (1.0 - st.p_hat);
        st.std_error = std::sqrt(st.variance_is / m);
        st.reliable = st.hits > 0 && st.p_hat > 0.0;
        st.eps_log_p = st.reliable ? eps * std::log(st.p_hat) : -std::numeric_limits<double>::infinity();
        rep.per_epsilon.push_back(st);
    }
    std::vector<double> xs, ys;
    for (const auto& st : rep.per_epsilon) {
        if (st.reliable) {
            xs.push_back(st.epsilon);
            ys.push_back(st.eps_log_p);
        }
    }
    const auto [a, b] = linear_fit(xs, ys);
    rep.extrapolated = a;
    rep.extrapolated_slope = b;
    rep.relative_error = rep.rate > 0.0 && std::isfinite(rep.rate) ? std::abs(a + rep.rate) / rep.rate
                                                                   : std::abs(a);
    return rep;
}

}  // namespace oblab
