#include "oblab/kernels.hpp"

namespace oblab::kernels {
namespace {

void second_difference(std::span<const double> in, std::span<double> out, double h2) {
    const std::size_t n = in.size();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        out[i] = ((in[i - 1] - 2.0 * in[i]) + in[i + 1]) / h2;
    }
}

void centered_difference(std::span<const double> in, std::span<double> out, double two_h) {
    const std::size_t n = in.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        out[i] = (in[i + 1] - in[i - 1]) / two_h;
    }
}

void axpy(double a, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = out[i] + a * x[i];
}

void penalty_update(std::span<const double> pred, std::span<const double> obstacle, double n,
                    double ndt, std::span<double> out, std::span<double> density) {
    const double denom = 1.0 + ndt;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        const double l = obstacle[i];
        if (p < l) {
            const double u = (p + ndt * l) / denom;
            out[i] = u;
            density[i] = n * (l - u);
        } else {
            out[i] = p;
            density[i] = 0.0;
        }
    }
}

void project(std::span<const double> pred, std::span<const double> obstacle, double inv_dt,
             std::span<double> out, std::span<double> density) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        const double u = p < obstacle[i] ? obstacle[i] : p;
        out[i] = u;
        density[i] = (u - p) * inv_dt;
    }
}

double sum_squares(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

double sum_squares_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double sum_squares_shortfall(std::span<const double> u, std::span<const double> obstacle) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - obstacle[i];
        if (d < 0.0) s += d * d;
    }
    return s;
}

constexpr KernelTable kScalar{
    "scalar",          second_difference, centered_difference, axpy,
    penalty_update,    project,           sum_squares,         sum_squares_diff,
    sum_squares_shortfall,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace oblab::kernels
