#include <cmath>

#include "oblab/error.hpp"
#include "oblab/problem.hpp"

namespace oblab {
namespace {

double knob(const ProblemParams& p, const std::string& key, double fallback) {
    auto it = p.values.find(key);
    return it == p.values.end() ? fallback : it->second;
}

Grid grid_from(const ProblemParams& p) {
    return Grid::uniform(p.x_min.value_or(-4.0), p.x_max.value_or(4.0), p.n_nodes.value_or(401));
}

double horizon_from(const ProblemParams& p) {
    const double T = p.horizon.value_or(1.0);
    if (!(T > 0.0)) throw ConfigError("horizon must be > 0");
    return T;
}

std::vector<double> weights_from(const ProblemParams& p, std::size_t default_modes, double default_decay) {
    const std::size_t J = p.n_modes.value_or(default_modes);
    if (J == 1 && !p.mode_decay) return {1.0};
    return geometric_mode_weights(J, p.mode_decay.value_or(default_decay));
}

// Pure heat flow with a Gaussian bump; the obstacle sits far below.
ProblemSpec free_heat(const ProblemParams& p) {
    ProblemSpec s;
    s.family = "free_heat";
    s.grid = grid_from(p);
    s.horizon = horizon_from(p);
    const double width = knob(p, "width", 0.1);
    const double amplitude = knob(p, "amplitude", 1.0);
    s.terminal = [width, amplitude](double x) { return amplitude * std::exp(-x * x / width); };
    s.obstacle = Obstacle::constant(knob(p, "obstacle_level", -1e6));
    s.coefficients.mode_weights = weights_from(p, 1, 0.5);
    return s;
}

ProblemSpec zero_problem(const ProblemParams& p) {
    ProblemSpec s;
    s.family = "zero";
    s.grid = grid_from(p);
    s.horizon = horizon_from(p);
    s.terminal = [](double) { return 0.0; };
    s.obstacle = Obstacle::constant(knob(p, "obstacle_level", -1e6));
    s.coefficients.mode_weights = weights_from(p, 1, 0.5);
    return s;
}

// The terminal datum dips below the obstacle L = 0, so the solution is pushed
// up immediately and the penalty is active in a layer near t = T.
ProblemSpec heat_obstacle(const ProblemParams& p) {
    ProblemSpec s;
    s.family = "heat_obstacle";
    s.grid = grid_from(p);
    s.horizon = horizon_from(p);
    const double dip = knob(p, "dip", 2.0);
    const double width = knob(p, "width", 0.05);
    s.terminal = [dip, width](double x) { return 1.0 - dip * std::exp(-x * x / width); };
    s.obstacle = Obstacle::constant(0.0);
    s.coefficients.mode_weights = weights_from(p, 1, 0.5);
    s.allow_terminal_layer = true;
    return s;
}

ProblemSpec linear_additive(const ProblemParams& p) {
    ProblemSpec s;
    s.family = "linear_additive";
    s.grid = grid_from(p);
    s.horizon = horizon_from(p);
    const double sigma = knob(p, "sigma", 0.3);
    const double width = knob(p, "width", 0.1);
    s.terminal = [width](double x) { return std::exp(-x * x / width); };
    s.obstacle = Obstacle::constant(knob(p, "obstacle_level", -10.0));
    auto& co = s.coefficients;
    co.mode_weights = weights_from(p, 1, 0.5);
    co.h_shape = [sigma](double, double, double, double) { return sigma; };
    const double env = std::abs(sigma) * co.weight_norm();
    co.hbar = [env](double) { return env; };
    return s;
}

ProblemSpec quasilinear_full(const ProblemParams& p) {
    ProblemSpec s;
    s.family = "quasilinear_full";
    s.grid = grid_from(p);
    const double T = horizon_from(p);
    s.horizon = T;
    const double a_obs = knob(p, "obstacle_amplitude", 0.3);
    const double a_term = knob(p, "terminal_amplitude", 0.5);
    s.terminal = [a_term](double x) { return a_term * std::exp(-x * x / 0.5); };

    // L = a (1 - t/T) exp(-x^2 / 0.2)
    auto bump = [](double x) { return std::exp(-x * x / 0.2); };
    Obstacle& L = s.obstacle;
    L.value = [=](double t, double x) { return a_obs * (1.0 - t / T) * bump(x); };
    L.dt = [=](double, double x) { return -a_obs / T * bump(x); };
    L.dx = [=](double t, double x) { return a_obs * (1.0 - t / T) * bump(x) * (-10.0 * x); };
    L.dxx = [=](double t, double x) {
        return a_obs * (1.0 - t / T) * bump(x) * (100.0 * x * x - 10.0);
    };

    auto& co = s.coefficients;
    co.mode_weights = weights_from(p, 4, 0.5);
    co.f = [](double, double x, double y, double z) {
        return -0.5 * y + 0.2 * std::sin(z) * std::exp(-0.5 * x * x);
    };
    co.g = [](double, double x, double y, double z) {
        return 0.2 * std::sin(y) * std::exp(-0.5 * x * x) + 0.05 * std::tanh(z);
    };
    co.h_shape = [](double, double x, double y, double z) {
        return 0.4 * std::exp(-0.25 * x * x) * (0.5 + 0.25 * std::sin(y) + 0.25 * std::tanh(z));
    };
    const double wn = co.weight_norm();
    co.hbar = [wn](double x) { return 0.4 * std::exp(-0.25 * x * x) * wn; };
    co.lipschitz = {0.5, 0.1 * wn, 0.2, 0.05, 0.1 * wn};
    return s;
}

}  // namespace

std::vector<std::string> family_names() {
    return {"heat_obstacle", "linear_additive", "quasilinear_full", "free_heat", "zero"};
}

ProblemSpec make_problem(const ProblemParams& params) {
    if (params.family == "heat_obstacle") return heat_obstacle(params);
    if (params.family == "linear_additive") return linear_additive(params);
    if (params.family == "quasilinear_full") return quasilinear_full(params);
    if (params.family == "free_heat") return free_heat(params);
    if (params.family == "zero") return zero_problem(params);
    throw ConfigError("unknown problem family '" + params.family + "'");
}

}  // namespace oblab
