#include "oblab/control.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include "oblab/error.hpp"

namespace oblab {

Control::Control(const TimeMesh& mesh, std::size_t n_modes)
    : mesh_(mesh), n_modes_(n_modes), values_(mesh.n_steps * n_modes, 0.0) {
    if (n_modes == 0) throw DomainError("control needs at least one mode");
}

Control Control::from_function(const TimeMesh& mesh, std::size_t n_modes,
                               const std::function<double(double, std::size_t)>& fn) {
    Control k(mesh, n_modes);
    const double dt = mesh.dt();
    for (std::size_t i = 0; i < mesh.n_steps; ++i) {
        const double t = (static_cast<double>(i) + 0.5) * dt;
        for (std::size_t j = 0; j < n_modes; ++j) k(i, j) = fn(t, j);
    }
    return k;
}

double Control::norm_sq() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return mesh_.dt() * s;
}

bool Control::is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

bool Control::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Control& Control::operator+=(const Control& other) {
    require_same_mesh(mesh_, other.mesh_, "control addition");
    if (n_modes_ != other.n_modes_) throw DomainError("control mode count mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

Control& Control::operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
}

Control operator+(Control a, const Control& b) { return a += b; }
Control operator*(double a, Control k) { return k *= a; }

void write_csv(std::ostream& os, const Control& k) {
    os << 't';
    for (std::size_t j = 0; j < k.n_modes(); ++j) os << ",k_" << (j + 1);
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        os.write(buf, res.ptr - buf);
    };
    for (std::size_t i = 0; i < k.n_rows(); ++i) {
        put(k.mesh().time(i));
        for (std::size_t j = 0; j < k.n_modes(); ++j) {
            os << ',';
            put(k(i, j));
        }
        os << '\n';
    }
}

Control read_control_csv(std::istream& is, double horizon) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,", 0) != 0) throw DomainError("control CSV needs a 't,k_1,...' header");
    const std::size_t J = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<double> vals;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0;
        std::size_t fields = 0;
        while (pos <= line.size()) {
            std::size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            double v = 0.0;
            auto res = std::from_chars(line.data() + pos, line.data() + next, v);
            if (res.ec != std::errc()) throw DomainError("malformed control CSV value");
            if (fields > 0) vals.push_back(v);
            ++fields;
            pos = next + 1;
        }
        if (fields != J + 1) throw DomainError("ragged control CSV");
        ++rows;
    }
    Control k(TimeMesh::uniform(horizon, rows), J);
    std::copy(vals.begin(), vals.end(), k.values().begin());
    return k;
}

std::vector<Control> ball_family(const TimeMesh& mesh, std::size_t n_modes, double radius_sq, std::size_t size) {
    if (size < 2) throw DomainError("ball_family needs at least two members");
    if (!(radius_sq > 0.0)) throw DomainError("ball_family radius must be > 0");
    std::vector<Control> out;
    out.reserve(size);
    out.emplace_back(mesh, n_modes);
    const double T = mesh.horizon;
    for (std::size_t s = 1; s < size; ++s) {
        const double freq = static_cast<double>(s);
        Control k = Control::from_function(mesh, n_modes, [&](double t, std::size_t j) {
            const double base = s % 2 == 1 ? std::sin(2.0 * std::numbers::pi * freq * t / T)
                                           : std::cos(std::numbers::pi * freq * t / T);
            return base * std::pow(0.5, static_cast<double>(j));
        });
        const double target = 0.99 * radius_sq * static_cast<double>(s) / static_cast<double>(size - 1);
        k *= std::sqrt(target / k.norm_sq());
        out.push_back(std::move(k));
    }
    return out;
}

}  // namespace oblab
