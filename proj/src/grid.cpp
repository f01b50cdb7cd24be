#include "oblab/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "oblab/error.hpp"
#include "oblab/kernels.hpp"

namespace oblab {

Grid Grid::uniform(double x_min, double x_max, std::size_t n_nodes) {
    if (n_nodes < 3) throw DomainError("grid needs at least 3 nodes");
    if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max)) {
        throw DomainError("grid endpoints must be finite with x_max > x_min");
    }
    return Grid{x_min, x_max, n_nodes, 1, BoundaryKind::dirichlet_zero};
}

TimeMesh TimeMesh::uniform(double horizon, std::size_t n_steps) {
    if (n_steps == 0) throw DomainError("time mesh needs at least one step");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("horizon must be > 0");
    return TimeMesh{horizon, n_steps};
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b)) throw DomainError(std::string("grid mismatch in ") + what);
}

void require_same_mesh(const TimeMesh& a, const TimeMesh& b, const char* what) {
    if (!(a == b)) throw DomainError(std::string("time mesh mismatch in ") + what);
}

// ---------------------------------------------------------------------------
// Field

Field::Field(const Grid& grid) : grid_(grid), values_(grid.n_nodes, 0.0) {}

Field::Field(const Grid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.n_nodes) throw DomainError("field size does not match grid");
}

Field Field::from_function(const Grid& grid, const std::function<double(double)>& fn) {
    Field f(grid);
    for (std::size_t i = 0; i < grid.n_nodes; ++i) f[i] = fn(grid.node(i));
    return f;
}

bool Field::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Field& Field::operator+=(const Field& other) {
    require_same_grid(grid_, other.grid_, "field addition");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

Field& Field::operator-=(const Field& other) {
    require_same_grid(grid_, other.grid_, "field subtraction");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

Field& Field::operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double a, Field f) { return f *= a; }

// ---------------------------------------------------------------------------
// Trajectory

Trajectory::Trajectory(const Grid& grid, const TimeMesh& mesh)
    : grid_(grid), mesh_(mesh), data_(grid.n_nodes * mesh.n_nodes(), 0.0) {}

std::span<double> Trajectory::row(std::size_t i) {
    return std::span<double>(data_).subspan(i * grid_.n_nodes, grid_.n_nodes);
}

std::span<const double> Trajectory::row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * grid_.n_nodes, grid_.n_nodes);
}

Field Trajectory::field(std::size_t i) const {
    auto r = row(i);
    return Field(grid_, std::vector<double>(r.begin(), r.end()));
}

void Trajectory::set_field(std::size_t i, const Field& f) {
    require_same_grid(grid_, f.grid(), "Trajectory::set_field");
    std::copy(f.values().begin(), f.values().end(), row(i).begin());
}

double Trajectory::min_value() const { return *std::min_element(data_.begin(), data_.end()); }

// ---------------------------------------------------------------------------
// Operators

void laplacian_into(const Grid& grid, std::span<const double> f, std::span<double> out) {
    const double h = grid.spacing();
    kernels::active().second_difference(f, out, h * h);
}

void gradient_into(const Grid& grid, std::span<const double> f, std::span<double> out) {
    const double h = grid.spacing();
    const std::size_t n = f.size();
    kernels::active().centered_difference(f, out, 2.0 * h);
    out[0] = (f[1] - f[0]) / h;
    out[n - 1] = (f[n - 1] - f[n - 2]) / h;
}

Field laplacian(const Field& f) {
    Field out(f.grid());
    laplacian_into(f.grid(), f.values(), out.values());
    return out;
}

Field gradient(const Field& f) {
    Field out(f.grid());
    gradient_into(f.grid(), f.values(), out.values());
    return out;
}

Field divergence_of_flux(const Field& gvals) { return gradient(gvals); }

double h_norm(const Grid& grid, std::span<const double> f) {
    return std::sqrt(grid.spacing() * kernels::active().sum_squares(f));
}

double v_norm(const Grid& grid, std::span<const double> f) {
    std::vector<double> grad(f.size());
    gradient_into(grid, f, grad);
    const auto& k = kernels::active();
    return std::sqrt(grid.spacing() * (k.sum_squares(f) + k.sum_squares(grad)));
}

double h_norm(const Field& f) { return h_norm(f.grid(), f.values()); }
double v_norm(const Field& f) { return v_norm(f.grid(), f.values()); }

double ht_distance(const Trajectory& a, const Trajectory& b) {
    require_same_grid(a.grid(), b.grid(), "ht_distance");
    require_same_mesh(a.mesh(), b.mesh(), "ht_distance");
    const Grid& grid = a.grid();
    const std::size_t n = grid.n_nodes;
    std::vector<double> diff(n);
    double sup_h = 0.0;
    double v_sq_sum = 0.0;
    for (std::size_t t = 0; t < a.n_times(); ++t) {
        auto ra = a.row(t);
        auto rb = b.row(t);
        for (std::size_t i = 0; i < n; ++i) diff[i] = ra[i] - rb[i];
        sup_h = std::max(sup_h, h_norm(grid, diff));
        if (t + 1 < a.n_times()) {
            const double v = v_norm(grid, diff);
            v_sq_sum += v * v;
        }
    }
    return sup_h + std::sqrt(a.mesh().dt() * v_sq_sum);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void put_number(std::ostream& os, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
}

void put_header(std::ostream& os, const Grid& grid, bool with_time) {
    if (with_time) os << 't';
    for (std::size_t i = 0; i < grid.n_nodes; ++i) {
        if (with_time || i > 0) os << ',';
        put_number(os, grid.node(i));
    }
    os << '\n';
}

std::vector<double> parse_row(const std::string& line) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t next = line.find(',', pos);
        if (next == std::string::npos) next = line.size();
        double v = 0.0;
        auto res = std::from_chars(line.data() + pos, line.data() + next, v);
        if (res.ec != std::errc()) throw DomainError("malformed CSV number: " + line.substr(pos, next - pos));
        out.push_back(v);
        pos = next + 1;
    }
    return out;
}

}  // namespace

void write_csv(std::ostream& os, const Trajectory& traj) {
    put_header(os, traj.grid(), true);
    for (std::size_t t = 0; t < traj.n_times(); ++t) {
        put_number(os, traj.mesh().time(t));
        for (double v : traj.row(t)) {
            os << ',';
            put_number(os, v);
        }
        os << '\n';
    }
}

void write_csv(std::ostream& os, const Field& field) {
    put_header(os, field.grid(), false);
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (i > 0) os << ',';
        put_number(os, field[i]);
    }
    os << '\n';
}

Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.empty() || line[0] != 't') {
        throw DomainError("trajectory CSV must start with a 't,' header");
    }
    const auto xs = parse_row(line.substr(2));
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        rows.push_back(parse_row(line));
        if (rows.back().size() != xs.size() + 1) throw DomainError("ragged trajectory CSV");
    }
    if (rows.size() < 2) throw DomainError("trajectory CSV needs at least two time rows");
    const Grid grid = Grid::uniform(xs.front(), xs.back(), xs.size());
    const TimeMesh mesh = TimeMesh::uniform(rows.back()[0], rows.size() - 1);
    Trajectory traj(grid, mesh);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::copy(rows[t].begin() + 1, rows[t].end(), traj.row(t).begin());
    }
    return traj;
}

}  // namespace oblab
