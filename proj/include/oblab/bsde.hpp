#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "oblab/grid.hpp"
#include "oblab/problem.hpp"
#include "oblab/skeleton.hpp"

namespace oblab {

/// Brownian paths started uniformly on the grid box. Increments are
/// Normal(0, 2 D dt), so the generator is D times the Laplacian; D = 1/2 is
/// the standard Brownian motion matching the 1/2 Laplacian of the PDE.
struct PathEnsemble {
    std::size_t n_paths = 0;
    TimeMesh mesh;
    double x_min = 0.0;
    double x_max = 1.0;
    double diffusion = 0.5;
    std::uint64_t seed = 0;
    std::vector<double> start_points;
    std::vector<double> paths;  // n_paths x (n_steps + 1)
    /// First sampled time outside the box, +inf if none. Inherited by coarse
    /// views, so every resolution stops a path at the same time.
    std::vector<double> exit_times;

    double operator()(std::size_t p, std::size_t i) const { return paths[p * (mesh.n_steps + 1) + i]; }
    /// Number of mesh nodes strictly before the exit time; n_steps + 1 if never.
    std::size_t survival(std::size_t p) const;
    double box_volume() const { return x_max - x_min; }
};

PathEnsemble make_ensemble(std::size_t n_paths, const TimeMesh& mesh, double x_min, double x_max,
                           std::uint64_t seed, double diffusion = 0.5);

/// Same Brownian paths observed on a mesh `factor` times coarser.
PathEnsemble coarsen(const PathEnsemble& fine, std::size_t factor);

struct BsdeResidual {
    double rms = 0.0;           // root mean square of r / sqrt(dt)
    std::size_t n_terms = 0;    // (path, step) pairs used
    std::size_t n_paths_used = 0;
    double exit_fraction = 0.0; // paths that left the box before T
};

/// One-step residual of the BSDE representation along the ensemble:
///   r_i = Y_i - [Y_{i+1} + (f + sum_j h_j k_j + nu + div g) dt - Z_i dW_i]
/// with Y = u(t_i, W), Z = grad u(t_i, W), nu the stored penalty density, all
/// read off the grid by linear interpolation at (t_i, W_{t_i}). Terms at and
/// after a path's exit are dropped. Requires diffusion == 1/2.
BsdeResidual bsde_residual(const ProblemSpec& problem, const PenalizedSolution& sol, const PathEnsemble& ens);

struct StarCheck {
    double mean_gap = 0.0;
    double std_error = 0.0;
    double mean_abs_gap = 0.0;
    std::size_t n_paths = 0;
};

/// Compares the forward-plus-backward integral
///   sum_i J(t_i, W_i) dW_i - sum_i J(t_{i+1}, W_{i+1}) dW_i
/// (the backward integral runs against reversed increments) with
///   -2 D sum_i div J(t_i, W_i) dt.
/// At D = 1 this is the identity int J * dW = -2 int div J dr.
StarCheck star_integral_check(const std::function<double(double, double)>& J,
                              const std::function<double(double, double)>& div_J, const PathEnsemble& ens);

struct EnergyStats {
    double sup_y_sq = 0.0;          // E^m[sup_t Y^2]
    double int_z_sq = 0.0;          // E^m[int Z^2 dt]
    double penalty_mass_sq = 0.0;   // E^m[(int nu dt)^2]
};

struct EnergyReport {
    std::vector<EnergyStats> members;
    EnergyStats max;
    EnergyStats min;
    /// max/min per statistic; 1 when both are zero.
    EnergyStats ratio;
    bool all_finite = true;
};

/// Path-ensemble energies of the penalized family, box-volume weighted.
EnergyReport family_energy(const std::vector<PenalizedSolution>& family, const PathEnsemble& ens);

/// max over t of E^m[((Y - S)^-)^4] along the ensemble.
double path_shortfall_l4(const PenalizedSolution& sol, const PathEnsemble& ens);

/// Linear interpolation of a grid row at x (x clamped to the box).
double interpolate(const Grid& grid, std::span<const double> row, double x);

}  // namespace oblab
