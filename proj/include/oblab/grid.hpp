#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace oblab {

enum class BoundaryKind { dirichlet_zero };

/// Uniform 1-D grid on [x_min, x_max]. Boundary nodes are held at zero by
/// every evolution operator, which truncates the whole line to a box.
struct Grid {
    double x_min = 0.0;
    double x_max = 1.0;
    std::size_t n_nodes = 3;
    int dimension = 1;
    BoundaryKind boundary = BoundaryKind::dirichlet_zero;

    /// Throws DomainError unless n_nodes >= 3 and x_max > x_min.
    static Grid uniform(double x_min, double x_max, std::size_t n_nodes);

    double spacing() const { return (x_max - x_min) / static_cast<double>(n_nodes - 1); }
    double node(std::size_t i) const {
        return i + 1 == n_nodes ? x_max : x_min + static_cast<double>(i) * spacing();
    }
    bool contains(double x) const { return x >= x_min && x <= x_max; }

    bool operator==(const Grid&) const = default;
};

/// Uniform time mesh 0 = t_0 < ... < t_N = horizon.
struct TimeMesh {
    double horizon = 1.0;
    std::size_t n_steps = 1;

    static TimeMesh uniform(double horizon, std::size_t n_steps);

    double dt() const { return horizon / static_cast<double>(n_steps); }
    double time(std::size_t i) const {
        return i == n_steps ? horizon : static_cast<double>(i) * dt();
    }
    std::size_t n_nodes() const { return n_steps + 1; }

    bool operator==(const TimeMesh&) const = default;
};

/// A grid function.
class Field {
public:
    Field() = default;
    explicit Field(const Grid& grid);
    Field(const Grid& grid, std::vector<double> values);

    static Field from_function(const Grid& grid, const std::function<double(double)>& fn);

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool all_finite() const;

    Field& operator+=(const Field& other);
    Field& operator-=(const Field& other);
    Field& operator*=(double a);

    bool operator==(const Field&) const = default;

private:
    Grid grid_{};
    std::vector<double> values_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double a, Field f);

/// Time-indexed family of fields; row i lives at mesh.time(i).
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(const Grid& grid, const TimeMesh& mesh);

    const Grid& grid() const { return grid_; }
    const TimeMesh& mesh() const { return mesh_; }
    std::size_t n_times() const { return mesh_.n_nodes(); }

    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;
    Field field(std::size_t i) const;
    void set_field(std::size_t i, const Field& f);

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double min_value() const;

    bool operator==(const Trajectory&) const = default;

private:
    Grid grid_{};
    TimeMesh mesh_{};
    std::vector<double> data_;
};

// Discrete operators. Boundary conventions are described per function.

/// Second difference at interior nodes, zero on the boundary.
Field laplacian(const Field& f);
/// Centered difference at interior nodes, one-sided at the two ends.
Field gradient(const Field& f);
/// Derivative of a nodewise flux; same stencil as gradient.
Field divergence_of_flux(const Field& gvals);

/// Span versions used by the solvers. `out` must have the grid's size.
void gradient_into(const Grid& grid, std::span<const double> f, std::span<double> out);
void laplacian_into(const Grid& grid, std::span<const double> f, std::span<double> out);

double h_norm(const Field& f);
double v_norm(const Field& f);
/// sup_t |a_t - b_t|_H + (dt * sum_t |a_t - b_t|_V^2)^{1/2}, the time sum over
/// the solver-produced nodes t_0 .. t_{N-1}.
double ht_distance(const Trajectory& a, const Trajectory& b);

double h_norm(const Grid& grid, std::span<const double> f);
double v_norm(const Grid& grid, std::span<const double> f);

// CSV: header row "t,<x_0>,...,<x_{n-1}>" followed by one row per time node.
void write_csv(std::ostream& os, const Trajectory& traj);
void write_csv(std::ostream& os, const Field& field);
Trajectory read_trajectory_csv(std::istream& is);

void require_same_grid(const Grid& a, const Grid& b, const char* what);
void require_same_mesh(const TimeMesh& a, const TimeMesh& b, const char* what);

}  // namespace oblab
