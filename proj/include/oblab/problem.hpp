#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oblab/grid.hpp"

namespace oblab {

/// Coefficient map (t, x, y, z) -> value, where y = u(t,x) and z = grad u(t,x).
/// An empty map means the coefficient is identically zero; the solvers skip it.
using PointMap = std::function<double(double t, double x, double y, double z)>;
using SpaceTimeMap = std::function<double(double t, double x)>;
using SpaceMap = std::function<double(double x)>;

struct LipschitzConstants {
    double c_f = 0.0;
    double c_h = 0.0;
    double c_g = 0.0;
    double alpha = 0.1;  // z-Lipschitz constant of g
    double beta = 0.1;   // z-Lipschitz constant of the l2 column of h
};

struct CoefficientSet {
    PointMap f;
    PointMap g;
    PointMap h_shape;
    /// h_j = c_j * h_shape for j = 1..J.
    std::vector<double> mode_weights{1.0};
    LipschitzConstants lipschitz;
    /// Pointwise l2 envelope of (h_j)_j. Empty means zero.
    SpaceMap hbar;

    std::size_t n_modes() const { return mode_weights.size(); }
    double weight_norm() const;
};

/// Obstacle L(t, x) together with its derivatives.
struct Obstacle {
    SpaceTimeMap value;
    SpaceTimeMap dt;
    SpaceTimeMap dx;
    SpaceTimeMap dxx;
    bool time_independent = false;

    static Obstacle constant(double c);
};

struct ProblemSpec {
    std::string family = "custom";
    CoefficientSet coefficients;
    Obstacle obstacle;
    SpaceMap terminal;
    double horizon = 1.0;
    Grid grid;
    /// When set, a terminal datum below L(T) is reported as waived rather
    /// than failed. The solution then carries an initial boundary layer.
    bool allow_terminal_layer = false;
};

/// c_j = sqrt(1 - r^2) r^(j-1), j = 1..J. The weights' squared sum is 1 - r^(2J).
std::vector<double> geometric_mode_weights(std::size_t n_modes, double decay);

struct CheckResult {
    std::string name;
    bool passed = false;
    bool waived = false;
    /// Signed margin; positive means slack in favour of passing.
    double margin = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    bool passed = false;

    const CheckResult* find(const std::string& name) const;
    std::string summary() const;
};

struct ValidationOptions {
    std::size_t n_probes = 1000;
    double lipschitz_slack = 0.01;
    double probe_box = 5.0;
    double margin_floor = 0.0;
};

/// Checks the structural assumptions on the problem data. Deterministic and
/// side-effect free.
ValidationReport validate(const ProblemSpec& problem, const ValidationOptions& opts = {});

/// Throws ValidationError listing the failed checks.
void require_valid(const ProblemSpec& problem);

struct CoefficientValues {
    Field fval;
    Field gval;
    std::vector<Field> hvals;
};

/// Nodewise evaluation of f, g and the h_j. Throws EvaluationError naming the
/// node on a non-finite value.
CoefficientValues eval_all(const ProblemSpec& problem, double t, const Field& u, const Field& grad_u);

/// Terminal datum sampled on the grid, boundary nodes set to zero.
Field terminal_field(const ProblemSpec& problem);
Field obstacle_field(const ProblemSpec& problem, double t);

// Bundled families -----------------------------------------------------------

struct ProblemParams {
    std::string family = "heat_obstacle";
    std::optional<double> x_min;
    std::optional<double> x_max;
    std::optional<std::size_t> n_nodes;
    std::optional<double> horizon;
    std::optional<std::size_t> n_modes;
    std::optional<double> mode_decay;
    /// Family-specific numeric knobs (for example "sigma" or "obstacle_level").
    std::map<std::string, double> values;
};

/// Builds one of heat_obstacle, linear_additive, quasilinear_full, or the
/// test families free_heat and zero. Unknown names throw ConfigError.
ProblemSpec make_problem(const ProblemParams& params);
std::vector<std::string> family_names();

}  // namespace oblab
