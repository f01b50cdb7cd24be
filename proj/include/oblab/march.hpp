#pragma once

// Reversed-time semi-implicit march shared by the skeleton and SPDE solvers.
//
// With w(tau) = u(T - tau) the equation reads
//   dw/dtau = 1/2 w'' + (g)' + f + sum_j h_j k_j + sqrt(eps) sum_j h_j dB_j/dtau + n (w - L)^-
// One step: explicit coefficients at the current state, a theta-scheme
// diffusion solve, then the obstacle treatment at the new time node.

#include <memory>
#include <span>
#include <vector>

#include "oblab/grid.hpp"
#include "oblab/problem.hpp"

namespace oblab {

enum class ObstacleTreatment { penalty, projection };

/// Diffusion time stepping: theta = 1 is backward Euler, 1/2 Crank-Nicolson.
/// The first `startup_steps` steps always use backward Euler, which damps the
/// high modes of non-smooth terminal data before Crank-Nicolson takes over.
struct DiffusionScheme {
    double theta = 0.5;
    std::size_t startup_steps = 2;
};

struct MarchResult {
    Trajectory traj;
    Trajectory density;
};

class Stepper {
public:
    /// `problem` must outlive the stepper. Throws ConfigError when the time step violates the explicit stability
    /// bounds dt*alpha/h^2 <= 1 (when g is present) and dt*c_f <= 1 (when f is).
    Stepper(const ProblemSpec& problem, const TimeMesh& mesh, const DiffusionScheme& scheme = {});

    const ProblemSpec& problem() const { return *problem_; }
    const TimeMesh& mesh() const { return mesh_; }
    const Grid& grid() const { return problem_->grid; }

    /// Obstacle sampled on the grid at every time node.
    const std::shared_ptr<const Trajectory>& obstacle() const { return obstacle_; }
    std::span<const double> obstacle_row(std::size_t i) const { return obstacle_->row(i); }

    /// control: n_steps x J row-major (empty = zero control).
    /// noise:   n_steps x J Brownian increments (ignored when sqrt_eps == 0).
    /// n is the penalty parameter (unused for projection).
    MarchResult run(ObstacleTreatment treatment, double n, std::span<const double> control,
                    std::span<const double> noise, double sqrt_eps) const;

private:
    const ProblemSpec* problem_;
    TimeMesh mesh_;
    std::shared_ptr<const Trajectory> obstacle_;
    std::vector<double> terminal_;
    DiffusionScheme scheme_;
    // LU factors of (I - theta dt/2 D2) on the interior nodes, for the
    // start-up theta = 1 and for the main theta.
    struct Factor {
        double theta = 1.0;
        double off_diag = 0.0;
        std::vector<double> upper;
        std::vector<double> inv_pivot;
    };
    Factor startup_;
    Factor main_;
    static Factor factor(double theta, double dt, double h, std::size_t m);
};

}  // namespace oblab
