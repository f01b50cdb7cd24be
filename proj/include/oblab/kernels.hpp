#pragma once

// Data-parallel inner loops of the solvers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active table is chosen once at startup from CPU features (and
// the OBLAB_SIMD environment variable: "scalar", "avx2" or "auto"). Element-wise
// kernels are bit-identical across backends; reductions may differ in the last
// few ulps because the summation order differs.

#include <cstddef>
#include <span>
#include <string_view>

namespace oblab::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
    const char* name;

    // out[i] = (in[i-1] - 2 in[i] + in[i+1]) / h2 for interior i; out[0] = out[n-1] = 0.
    void (*second_difference)(std::span<const double> in, std::span<double> out, double h2);

    // out[i] = (in[i+1] - in[i-1]) / two_h for interior i. Boundary entries untouched.
    void (*centered_difference)(std::span<const double> in, std::span<double> out, double two_h);

    // out[i] += a * x[i]
    void (*axpy)(double a, std::span<const double> x, std::span<double> out);

    // Implicit penalty relation, solved pointwise:
    //   p < L  ->  u = (p + ndt L) / (1 + ndt),  density = n (L - u)
    //   else   ->  u = p,                        density = 0
    void (*penalty_update)(std::span<const double> pred, std::span<const double> obstacle,
                           double n, double ndt, std::span<double> out,
                           std::span<double> density);

    // u = max(p, L), density = (u - p) * inv_dt
    void (*project)(std::span<const double> pred, std::span<const double> obstacle,
                    double inv_dt, std::span<double> out, std::span<double> density);

    double (*sum_squares)(std::span<const double> x);
    double (*sum_squares_diff)(std::span<const double> a, std::span<const double> b);

    // sum of ((u - L)^-)^2
    double (*sum_squares_shortfall)(std::span<const double> u, std::span<const double> obstacle);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();

bool supported(Backend b);
const KernelTable* table(Backend b);

// Active table; see set_backend.
const KernelTable& active();
Backend active_backend();

// Not thread-safe against concurrent solves; intended for startup and tests.
void set_backend(Backend b);

std::string_view backend_name(Backend b);

}  // namespace oblab::kernels
