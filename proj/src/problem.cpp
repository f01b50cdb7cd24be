#include "oblab/problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "oblab/error.hpp"

namespace oblab {

double CoefficientSet::weight_norm() const {
    double s = 0.0;
    for (double c : mode_weights) s += c * c;
    return std::sqrt(s);
}

Obstacle Obstacle::constant(double c) {
    Obstacle o;
    o.value = [c](double, double) { return c; };
    o.dt = [](double, double) { return 0.0; };
    o.dx = [](double, double) { return 0.0; };
    o.dxx = [](double, double) { return 0.0; };
    o.time_independent = true;
    return o;
}

std::vector<double> geometric_mode_weights(std::size_t n_modes, double decay) {
    if (n_modes == 0) throw ConfigError("n_modes must be >= 1");
    if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("mode_decay must lie in [0, 1)");
    std::vector<double> c(n_modes);
    const double lead = std::sqrt(1.0 - decay * decay);
    double p = 1.0;
    for (std::size_t j = 0; j < n_modes; ++j) {
        c[j] = lead * p;
        p *= decay;
    }
    return c;
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& c : checks) {
        if (c.passed) continue;
        if (!first) os << "; ";
        first = false;
        os << c.name << " (" << c.detail << ")";
    }
    return first ? std::string("all checks passed") : os.str();
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

struct Probe {
    double t, x, y, z;
};

std::vector<Probe> halton_probes(const ProblemSpec& p, const ValidationOptions& opts) {
    std::vector<Probe> out(opts.n_probes);
    const double box = opts.probe_box;
    for (std::size_t i = 0; i < opts.n_probes; ++i) {
        const std::uint64_t k = i + 1;
        out[i].t = p.horizon * radical_inverse(k, 2);
        out[i].x = p.grid.x_min + (p.grid.x_max - p.grid.x_min) * radical_inverse(k, 3);
        out[i].y = -box + 2.0 * box * radical_inverse(k, 5);
        out[i].z = -box + 2.0 * box * radical_inverse(k, 7);
    }
    return out;
}

std::string where(const Probe& q) {
    std::ostringstream os;
    os << "t=" << q.t << " x=" << q.x << " y=" << q.y << " z=" << q.z;
    return os.str();
}

// Tracks the first non-finite evaluation seen during the probes.
struct FiniteGuard {
    bool ok = true;
    std::string location;

    double operator()(double v, const char* what, const Probe& q) {
        if (!std::isfinite(v) && ok) {
            ok = false;
            location = std::string(what) + " at " + where(q);
        }
        return v;
    }
};

double eval_or_zero(const PointMap& m, double t, double x, double y, double z) {
    return m ? m(t, x, y, z) : 0.0;
}

// Checks |F(y1,z1) - F(y2,z2)| * scale <= cy |dy| + cz |dz| on local
// finite-difference pairs and on pairs of distinct probes.
CheckResult lipschitz_check(const std::string& name, const PointMap& fn, double scale, double cy,
                            double cz, const std::vector<Probe>& probes, double slack,
                            FiniteGuard& guard) {
    CheckResult r;
    r.name = name;
    if (!fn) {
        r.passed = true;
        r.margin = 1.0 + slack;
        r.detail = "identically zero";
        return r;
    }
    constexpr double kStep = 1e-4;
    constexpr double kAbs = 1e-12;
    double worst = 0.0;
    std::string worst_at;
    bool ok = true;
    auto consider = [&](double diff, double bound, const Probe& q) {
        const double lhs = std::abs(diff) * scale;
        if (!(lhs <= (1.0 + slack) * bound + kAbs)) ok = false;
        const double ratio = bound > 0.0 ? lhs / bound : (lhs > kAbs ? std::numeric_limits<double>::infinity() : 0.0);
        if (ratio > worst) {
            worst = ratio;
            worst_at = where(q);
        }
    };
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const Probe& q = probes[i];
        const double base = guard(fn(q.t, q.x, q.y, q.z), name.c_str(), q);
        const double fy = guard(fn(q.t, q.x, q.y + kStep, q.z), name.c_str(), q);
        const double fz = guard(fn(q.t, q.x, q.y, q.z + kStep), name.c_str(), q);
        consider(fy - base, cy * kStep, q);
        consider(fz - base, cz * kStep, q);
        const Probe& o = probes[(i * 7 + 3) % probes.size()];
        const double other = guard(fn(q.t, q.x, o.y, o.z), name.c_str(), q);
        consider(other - base, cy * std::abs(o.y - q.y) + cz * std::abs(o.z - q.z), q);
    }
    r.passed = ok && guard.ok;
    r.margin = 1.0 + slack - worst;
    std::ostringstream os;
    os << "worst ratio " << worst << " of declared constants";
    if (!worst_at.empty()) os << " at " << worst_at;
    r.detail = os.str();
    return r;
}

}  // namespace

ValidationReport validate(const ProblemSpec& p, const ValidationOptions& opts) {
    ValidationReport rep;
    const auto& co = p.coefficients;
    const auto& lip = co.lipschitz;
    const auto probes = halton_probes(p, opts);
    FiniteGuard guard;

    {
        CheckResult c;
        c.name = "contraction";
        const double lhs = lip.alpha + 0.5 * lip.beta * lip.beta;
        const bool ranges = lip.alpha > 0.0 && lip.alpha < 1.0 && lip.beta > 0.0 && lip.beta < 1.0;
        c.margin = 0.5 - lhs;
        c.passed = ranges && c.margin > opts.margin_floor;
        std::ostringstream os;
        os << "alpha + beta^2/2 = " << lhs;
        if (!ranges) os << "; alpha and beta must lie in (0, 1)";
        c.detail = os.str();
        rep.checks.push_back(c);
    }

    {
        CheckResult c;
        c.name = "terminal_compatibility";
        double worst = std::numeric_limits<double>::infinity();
        std::size_t bad = 0;
        double worst_x = 0.0;
        for (std::size_t i = 1; i + 1 < p.grid.n_nodes; ++i) {
            const double x = p.grid.node(i);
            const double gap = p.terminal(x) - p.obstacle.value(p.horizon, x);
            if (!std::isfinite(gap)) {
                guard.ok = false;
                guard.location = "terminal datum at x=" + std::to_string(x);
                continue;
            }
            if (gap < -1e-12) ++bad;
            if (gap < worst) {
                worst = gap;
                worst_x = x;
            }
        }
        c.margin = worst;
        std::ostringstream os;
        os << bad << " interior nodes below L(T); min gap " << worst << " at x=" << worst_x;
        if (bad == 0) {
            c.passed = true;
        } else if (p.allow_terminal_layer) {
            c.passed = true;
            c.waived = true;
            os << " (waived: terminal layer allowed)";
        }
        c.detail = os.str();
        rep.checks.push_back(c);
    }

    const double wnorm = co.weight_norm();
    rep.checks.push_back(lipschitz_check("lipschitz_f", co.f, 1.0, lip.c_f, lip.c_f, probes,
                                         opts.lipschitz_slack, guard));
    rep.checks.push_back(lipschitz_check("lipschitz_g", co.g, 1.0, lip.c_g, lip.alpha, probes,
                                         opts.lipschitz_slack, guard));
    rep.checks.push_back(lipschitz_check("lipschitz_h", co.h_shape, wnorm, lip.c_h, lip.beta,
                                         probes, opts.lipschitz_slack, guard));

    {
        CheckResult c;
        c.name = "hbar_envelope";
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& q : probes) {
            const double col = std::abs(guard(eval_or_zero(co.h_shape, q.t, q.x, q.y, q.z), "h_shape", q)) * wnorm;
            const double env = co.hbar ? guard(co.hbar(q.x), "hbar", q) : 0.0;
            worst = std::min(worst, env - col);
        }
        c.margin = worst;
        c.passed = worst >= -1e-12;
        c.detail = "min of hbar(x) - |h(t,x,y,z)|_l2 over probes: " + std::to_string(worst);
        rep.checks.push_back(c);
    }

    {
        CheckResult c;
        c.name = "obstacle_derivatives";
        const auto& L = p.obstacle;
        if (!L.value || !L.dt || !L.dx || !L.dxx) {
            c.passed = false;
            c.margin = -1.0;
            c.detail = "obstacle derivative maps not supplied";
        } else {
            constexpr double s = 1e-4;
            double worst = -std::numeric_limits<double>::infinity();
            std::string worst_what;
            for (const auto& q : probes) {
                const double t = std::clamp(q.t, s, p.horizon - s);
                const double v = guard(L.value(t, q.x), "obstacle", q);
                const double fd_t = (L.value(t + s, q.x) - L.value(t - s, q.x)) / (2.0 * s);
                const double fd_x = (L.value(t, q.x + s) - L.value(t, q.x - s)) / (2.0 * s);
                const double fd_xx = ((L.value(t, q.x - s) - 2.0 * v) + L.value(t, q.x + s)) / (s * s);
                const std::array<std::pair<double, double>, 3> pairs{{
                    {guard(L.dt(t, q.x), "obstacle dt", q), fd_t},
                    {guard(L.dx(t, q.x), "obstacle dx", q), fd_x},
                    {guard(L.dxx(t, q.x), "obstacle dxx", q), fd_xx},
                }};
                static constexpr const char* names[] = {"dt", "dx", "dxx"};
                for (std::size_t k = 0; k < 3; ++k) {
                    const double scaled = std::abs(pairs[k].first - pairs[k].second) /
                                          (1e-5 * (1.0 + std::abs(pairs[k].first)));
                    if (scaled > worst) {
                        worst = scaled;
                        worst_what = std::string(names[k]) + " at " + where(q);
                    }
                }
            }
            c.margin = 1.0 - worst;
            c.passed = worst <= 1.0;
            c.detail = "worst mismatch / tolerance " + std::to_string(worst) + " (" + worst_what + ")";
        }
        rep.checks.push_back(c);
    }

    {
        CheckResult c;
        c.name = "obstacle_boundary";
        double worst = -std::numeric_limits<double>::infinity();
        if (p.obstacle.value) {
            for (const auto& q : probes) {
                worst = std::max({worst, p.obstacle.value(q.t, p.grid.x_min),
                                  p.obstacle.value(q.t, p.grid.x_max)});
            }
        }
        c.margin = -worst;
        c.passed = worst <= 1e-12;
        c.detail = "max of L on the boundary " + std::to_string(worst);
        rep.checks.push_back(c);
    }

    {
        CheckResult c;
        c.name = "mode_weights";
        const double s = wnorm * wnorm;
        c.margin = 1.0 - s;
        c.passed = !co.mode_weights.empty() && s <= 1.0 + 1e-12;
        c.detail = "sum of c_j^2 = " + std::to_string(s);
        rep.checks.push_back(c);
    }

    {
        CheckResult c;
        c.name = "finite_values";
        c.passed = guard.ok;
        c.margin = guard.ok ? 0.0 : -1.0;
        c.detail = guard.ok ? "all probe evaluations finite" : "non-finite " + guard.location;
        rep.checks.push_back(c);
    }

    rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(),
                             [](const CheckResult& c) { return c.passed; });
    return rep;
}

void require_valid(const ProblemSpec& problem) {
    const auto rep = validate(problem);
    if (!rep.passed) throw ValidationError("problem '" + problem.family + "' failed validation: " + rep.summary());
}

CoefficientValues eval_all(const ProblemSpec& p, double t, const Field& u, const Field& grad_u) {
    require_same_grid(p.grid, u.grid(), "eval_all");
    require_same_grid(p.grid, grad_u.grid(), "eval_all");
    const auto& co = p.coefficients;
    const std::size_t n = p.grid.n_nodes;
    CoefficientValues out{Field(p.grid), Field(p.grid), {}};
    Field shape(p.grid);
    auto check = [&](double v, const char* what, std::size_t i) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "non-finite " << what << " at node " << i << " (x=" << p.grid.node(i) << ", t=" << t << ")";
            throw EvaluationError(os.str());
        }
        return v;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double x = p.grid.node(i);
        if (co.f) out.fval[i] = check(co.f(t, x, u[i], grad_u[i]), "f", i);
        if (co.g) out.gval[i] = check(co.g(t, x, u[i], grad_u[i]), "g", i);
        if (co.h_shape) shape[i] = check(co.h_shape(t, x, u[i], grad_u[i]), "h", i);
    }
    out.hvals.reserve(co.n_modes());
    for (double c : co.mode_weights) out.hvals.push_back(c * shape);
    return out;
}

Field terminal_field(const ProblemSpec& p) {
    Field f = Field::from_function(p.grid, p.terminal);
    f[0] = 0.0;
    f[f.size() - 1] = 0.0;
    return f;
}

Field obstacle_field(const ProblemSpec& p, double t) {
    return Field::from_function(p.grid, [&](double x) { return p.obstacle.value(t, x); });
}

}  // namespace oblab
