#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "oblab/control.hpp"
#include "oblab/march.hpp"
#include "oblab/problem.hpp"

namespace oblab {

/// Brownian increments dB^j over each step, n_steps x J row-major.
struct NoisePath {
    std::size_t n_steps = 0;
    std::size_t n_modes = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> increments;

    double operator()(std::size_t i, std::size_t j) const { return increments[i * n_modes + j]; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(increments).subspan(i * n_modes, n_modes);
    }
};

/// Independent Normal(0, dt) draws keyed by (seed, step, mode).
NoisePath sample_noise(std::size_t n_steps, std::size_t n_modes, double dt, std::uint64_t seed);

struct StochasticSolution {
    Trajectory traj;
    Trajectory penalty_density;
    std::shared_ptr<const Trajectory> obstacle;
    double epsilon = 0.0;
    std::optional<Control> control;
    std::uint64_t noise_seed = 0;
};

/// Euler-Maruyama version of the skeleton march with the extra increment
/// sqrt(eps) sum_j h_j dB^j. With epsilon == 0 the noise term is skipped and
/// the result is bit-identical to solve_penalized with the same control.
StochasticSolution solve_spde(const ProblemSpec& problem, double epsilon, double n, const TimeMesh& mesh,
                              const NoisePath& noise, const std::optional<Control>& control = std::nullopt);
StochasticSolution solve_spde(const Stepper& stepper, double epsilon, double n, const NoisePath& noise,
                              const Control* control = nullptr);

struct ConditionIStats {
    double epsilon = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double variance = 0.0;
    std::vector<double> tail_probability;  // one per delta
    std::size_t n_ok = 0;
    std::vector<std::uint64_t> failed_seeds;
};

struct ConditionIReport {
    std::vector<double> deltas;
    std::vector<ConditionIStats> per_epsilon;
    double control_radius_sq = 0.0;  // max k_norm_sq over the family
    double slope = 0.0;              // log-log slope of mean distance vs epsilon
};

/// For each epsilon draws n_samples noise paths; sample s uses control
/// family[s % size]. Y = controlled SPDE, Z = same control with epsilon = 0.
/// Reports the H_T distance statistics.
ConditionIReport condition_i_distance(const ProblemSpec& problem, const std::vector<double>& epsilons,
                                      const std::vector<Control>& family, double n, const TimeMesh& mesh,
                                      std::size_t n_samples, std::uint64_t seed,
                                      const std::vector<double>& deltas, std::size_t workers = 0);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace oblab
