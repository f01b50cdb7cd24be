#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "oblab/grid.hpp"

namespace oblab {

/// Piecewise-constant Cameron-Martin control truncated to J modes. Row i holds
/// k on [t_i, t_{i+1}); there are n_steps rows.
class Control {
public:
    Control() = default;
    Control(const TimeMesh& mesh, std::size_t n_modes);

    static Control zero(const TimeMesh& mesh, std::size_t n_modes) { return Control(mesh, n_modes); }
    /// Samples fn(t, j) at interval midpoints.
    static Control from_function(const TimeMesh& mesh, std::size_t n_modes,
                                 const std::function<double(double, std::size_t)>& fn);

    const TimeMesh& mesh() const { return mesh_; }
    std::size_t n_modes() const { return n_modes_; }
    std::size_t n_rows() const { return mesh_.n_steps; }

    double& operator()(std::size_t i, std::size_t j) { return values_[i * n_modes_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_modes_ + j]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values_).subspan(i * n_modes_, n_modes_);
    }

    /// dt * sum_{i,j} k_ij^2
    double norm_sq() const;
    bool in_ball(double radius_sq) const { return norm_sq() <= radius_sq; }
    bool is_zero() const;
    bool all_finite() const;

    Control& operator+=(const Control& other);
    Control& operator*=(double a);
    bool operator==(const Control&) const = default;

private:
    TimeMesh mesh_{};
    std::size_t n_modes_ = 0;
    std::vector<double> values_;
};

Control operator+(Control a, const Control& b);
Control operator*(double a, Control k);

/// `size` controls spread through S_N, N = radius_sq: member s has
/// norm^2 = 0.99 N s / (size - 1) and alternates cosine and sine profiles with
/// mode weights halving in j. Member 0 is the zero control.
std::vector<Control> ball_family(const TimeMesh& mesh, std::size_t n_modes, double radius_sq, std::size_t size);

// CSV: header "t,k_1,...,k_J", one row per interval with its left endpoint.
void write_csv(std::ostream& os, const Control& k);
Control read_control_csv(std::istream& is, double horizon);

}  // namespace oblab
