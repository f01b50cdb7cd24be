#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "oblab/control.hpp"
#include "oblab/grid.hpp"
#include "oblab/problem.hpp"
#include "oblab/skeleton.hpp"

namespace oblab {

struct TargetEvent {
    enum class Kind { terminal_ball, sup_exceed };
    Kind kind = Kind::terminal_ball;
    /// terminal_ball: {u : |u(0) - center|_H <= radius}. radius = +inf is the whole space.
    Field center;
    double radius = std::numeric_limits<double>::infinity();
    /// sup_exceed: {u : max_t u(t, x_probe) >= level}
    double level = 0.0;
    std::size_t probe_node = 0;

    static TargetEvent terminal_ball(Field center, double radius);
    static TargetEvent sup_exceed(double level, std::size_t probe_node);

    /// Throws DomainError when malformed for the grid.
    void check(const Grid& grid) const;
    /// Squared hinge distance of the trajectory to the event; 0 inside.
    double penalty(const Trajectory& u) const;
    /// Signed excess: > 0 outside the event.
    double excess(const Trajectory& u) const;
    bool contains(const Trajectory& u) const { return excess(u) <= 0.0; }
};

/// 1/2 dt sum_{i,j} k_ij^2
double rate_functional(const Control& k);

struct LambdaStage {
    double lambda = 0.0;
    double rate = 0.0;
    double residual = 0.0;
    bool feasible = false;
    std::size_t iterations = 0;
    double objective = 0.0;
    double best_feasible_rate = std::numeric_limits<double>::infinity();
};

struct RateResult {
    Control minimizer;
    double rate = std::numeric_limits<double>::infinity();
    double constraint_residual = std::numeric_limits<double>::infinity();
    bool feasible = false;
    double penalty_n = 0.0;
    std::vector<LambdaStage> lambda_history;
    std::string warning;
};

struct OptConfig {
    double fd_rel_step = 1e-6;
    std::size_t max_iter = 300;
    double grad_tol = 1e-9;
    double armijo = 1e-4;
    double feasibility_tol = 1e-3;
    /// Penalty parameter used inside the objective; 0 picks n_final of a
    /// skeleton solve at the initial control.
    double penalty_n = 0.0;
    SkeletonOptions skeleton;
    std::size_t workers = 0;
};

/// Penalty continuation: for each lambda, gradient descent on
/// rate(k) + lambda * event.penalty(u_k) with forward-difference gradients,
/// Barzilai-Borwein trial steps and Armijo backtracking, warm-started from
/// the previous stage. Returns the best feasible iterate, or an infeasible
/// result with rate = +inf.
RateResult minimize_rate(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event,
                         const std::vector<double>& lambda_schedule, const Control& init,
                         const OptConfig& opt = {});

/// Objective value and forward-difference gradient, exposed for testing.
struct RateObjective {
    RateObjective(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event, double penalty_n);
    double operator()(const Control& k, double lambda) const;
    Trajectory solve(const Control& k) const;
    void gradient(const Control& k, double lambda, double f0, double rel_step, std::vector<double>& grad,
                  std::size_t workers = 0) const;
    void central_gradient(const Control& k, double lambda, double rel_step, std::vector<double>& grad) const;

private:
    const ProblemSpec* problem_;
    Stepper stepper_;
    TargetEvent event_;
    double n_;
};

struct ConditionIIEntry {
    double amplitude = 0.0;
    int frequency = 0;
    double distance = 0.0;
    double witness = 0.0;
    double norm_sq = 0.0;
};

struct ConditionIIReport {
    std::vector<ConditionIIEntry> entries;
    /// per amplitude: distances strictly decrease as the frequency grows
    bool monotone = true;
};

/// k^m = k + a sin(2 pi m t / T) e_1. Throws ConfigError when some k^m leaves
/// S_N, N = radius_sq.
ConditionIIReport condition_ii_test(const ProblemSpec& problem, const TimeMesh& mesh, const Control& k,
                                    const std::vector<double>& amplitudes, const std::vector<int>& frequencies,
                                    const std::function<double(double)>& witness, double radius_sq,
                                    const SkeletonOptions& opts = {});

struct McEpsilonStats {
    double epsilon = 0.0;
    double p_hat = 0.0;
    double std_error = 0.0;
    double eps_log_p = 0.0;
    std::size_t hits = 0;
    std::size_t n_samples = 0;
    bool reliable = true;
    double variance_is = 0.0;     // per-sample variance of the estimator used
    double variance_plain = 0.0;  // p(1-p) at the same p_hat
};

struct McReport {
    std::vector<McEpsilonStats> per_epsilon;
    bool importance = false;
    double rate = 0.0;
    double extrapolated = 0.0;  // intercept of eps log p_hat fitted linearly in eps
    double extrapolated_slope = 0.0;
    double relative_error = 0.0;  // |extrapolated + rate| / rate
};

/// Estimates P(U^eps in event). With importance sampling the driving noise
/// is shifted by k*/sqrt(eps) and reweighted by the exact discrete likelihood
/// ratio exp(-sum k* dB / sqrt(eps) - |k*|^2 / (2 eps)).
McReport mc_ldp_compare(const ProblemSpec& problem, const TimeMesh& mesh, const TargetEvent& event,
                        const std::vector<double>& epsilons, std::size_t n_samples, std::uint64_t seed,
                        bool use_importance, const RateResult& rate, double penalty_n,
                        std::size_t workers = 0);

/// Least-squares line y = a + b x; returns {a, b}.
std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace oblab
