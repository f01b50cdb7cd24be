#pragma once

#include <memory>
#include <string>
#include <vector>

#include "oblab/control.hpp"
#include "oblab/grid.hpp"
#include "oblab/march.hpp"
#include "oblab/problem.hpp"

namespace oblab {

struct PenaltyDiagnostics {
    /// max_t |u_t|_H^2 + dt * sum_t |u_t|_V^2
    double energy = 0.0;
    /// space-time L2 norm of (u - L)^- over the solver-produced nodes t_0..t_{N-1}
    double penalty_l2 = 0.0;
    /// min over interior nodes and t_0..t_{N-1} of u - L
    double min_gap = 0.0;
};

struct PenalizedSolution {
    Trajectory traj;
    Trajectory penalty_density;
    std::shared_ptr<const Trajectory> obstacle;
    double n = 0.0;
    Control control;
    PenaltyDiagnostics diagnostics;
};

struct RefinementStep {
    double n = 0.0;
    double cauchy_gap = 0.0;  // ht_distance to the previous n
    double residual = 0.0;    // complementarity residual at this n
    double penalty_l2 = 0.0;
};

struct SkeletonSolution {
    Trajectory traj;
    Trajectory measure_density;
    std::shared_ptr<const Trajectory> obstacle;
    double n_final = 0.0;  // 0 for the projection scheme
    double cauchy_gap = 0.0;
    bool converged = true;
    std::string warning;
    std::vector<RefinementStep> history;
    PenaltyDiagnostics diagnostics;
};

struct SkeletonOptions {
    double n0 = 1e3;
    double n_max = 1e7;
    double tol = 1e-3;
    bool operator==(const SkeletonOptions&) const = default;
};

/// The stepper overloads skip problem validation; the caller is responsible.
PenalizedSolution solve_penalized(const ProblemSpec& problem, const Control& control, double n,
                                  const TimeMesh& mesh);
PenalizedSolution solve_penalized(const Stepper& stepper, const Control& control, double n);

SkeletonSolution solve_projected(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh);
SkeletonSolution solve_projected(const Stepper& stepper, const Control& control);

/// Doubles n from n0 until consecutive solutions are within tol in the H_T
/// distance or n exceeds n_max. A non-converged result has converged = false
/// and a warning message.
SkeletonSolution solve_skeleton(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh,
                                const SkeletonOptions& opts = {});
SkeletonSolution solve_skeleton(const Stepper& stepper, const Control& control, const SkeletonOptions& opts = {});

/// dt * h * sum over t_0..t_{N-1} and interior x of (u - L)^- * density,
/// the pairing of the solution with the reflecting measure. For the penalty
/// scheme this equals n * |(u - L)^-|^2.
double complementarity_residual(const PenalizedSolution& sol);
double complementarity_residual(const SkeletonSolution& sol);

/// dt * h * sum (u - L)^+ * density. Zero by construction for both schemes.
double positive_part_pairing(const Trajectory& u, const Trajectory& density, const Trajectory& obstacle);

/// max over nodes of |(u - L)^+ * (u - L)^-|. Exactly zero.
double disjointness_violation(const Trajectory& u, const Trajectory& obstacle);

/// Space-time L2 norm of (u - L)^- over t_0..t_{N-1}.
double shortfall_l2(const Trajectory& u, const Trajectory& obstacle);
/// max over t_0..t_{N-1} of the spatial L4 norm of (u - L)^-.
double shortfall_l4_max(const Trajectory& u, const Trajectory& obstacle);

/// max over the family of n * |(u^n - L)^-|^2_{L2(dt,dx)}.
double penalty_l2_estimate(const ProblemSpec& problem, const std::vector<Control>& controls, double n,
                           const TimeMesh& mesh);

PenaltyDiagnostics diagnostics(const Trajectory& u, const Trajectory& obstacle);

void require_compatible(const ProblemSpec& problem, const Control& control, const TimeMesh& mesh);

}  // namespace oblab
