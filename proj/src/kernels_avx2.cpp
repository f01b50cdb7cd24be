#include "oblab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define OBLAB_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#else
#define OBLAB_HAVE_AVX2_KERNELS 0
#endif

namespace oblab::kernels {

#if OBLAB_HAVE_AVX2_KERNELS
namespace {

#define OBLAB_AVX2 __attribute__((target("avx2")))

OBLAB_AVX2 void second_difference(std::span<const double> in, std::span<double> out, double h2) {
    const std::size_t n = in.size();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d vh2 = _mm256_set1_pd(h2);
    std::size_t i = 1;
    for (; i + 4 < n; i += 4) {
        const __m256d left = _mm256_loadu_pd(&in[i - 1]);
        const __m256d mid = _mm256_loadu_pd(&in[i]);
        const __m256d right = _mm256_loadu_pd(&in[i + 1]);
        __m256d r = _mm256_sub_pd(left, _mm256_mul_pd(two, mid));
        r = _mm256_add_pd(r, right);
        _mm256_storeu_pd(&out[i], _mm256_div_pd(r, vh2));
    }
    for (; i + 1 < n; ++i) {
        out[i] = ((in[i - 1] - 2.0 * in[i]) + in[i + 1]) / h2;
    }
}

OBLAB_AVX2 void centered_difference(std::span<const double> in, std::span<double> out,
                                    double two_h) {
    const std::size_t n = in.size();
    const __m256d d = _mm256_set1_pd(two_h);
    std::size_t i = 1;
    for (; i + 4 < n; i += 4) {
        const __m256d left = _mm256_loadu_pd(&in[i - 1]);
        const __m256d right = _mm256_loadu_pd(&in[i + 1]);
        _mm256_storeu_pd(&out[i], _mm256_div_pd(_mm256_sub_pd(right, left), d));
    }
    for (; i + 1 < n; ++i) out[i] = (in[i + 1] - in[i - 1]) / two_h;
}

OBLAB_AVX2 void axpy(double a, std::span<const double> x, std::span<double> out) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    const std::size_t n = x.size();
    for (; i + 4 <= n; i += 4) {
        const __m256d y = _mm256_loadu_pd(&out[i]);
        const __m256d v = _mm256_loadu_pd(&x[i]);
        _mm256_storeu_pd(&out[i], _mm256_add_pd(y, _mm256_mul_pd(va, v)));
    }
    for (; i < n; ++i) out[i] = out[i] + a * x[i];
}

OBLAB_AVX2 void penalty_update(std::span<const double> pred, std::span<const double> obstacle,
                               double n, double ndt, std::span<double> out,
                               std::span<double> density) {
    const double denom = 1.0 + ndt;
    const __m256d vden = _mm256_set1_pd(denom);
    const __m256d vndt = _mm256_set1_pd(ndt);
    const __m256d vn = _mm256_set1_pd(n);
    const __m256d zero = _mm256_setzero_pd();
    const std::size_t len = pred.size();
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d p = _mm256_loadu_pd(&pred[i]);
        const __m256d l = _mm256_loadu_pd(&obstacle[i]);
        const __m256d below = _mm256_cmp_pd(p, l, _CMP_LT_OQ);
        const __m256d u = _mm256_div_pd(_mm256_add_pd(p, _mm256_mul_pd(vndt, l)), vden);
        const __m256d dens = _mm256_mul_pd(vn, _mm256_sub_pd(l, u));
        _mm256_storeu_pd(&out[i], _mm256_blendv_pd(p, u, below));
        _mm256_storeu_pd(&density[i], _mm256_blendv_pd(zero, dens, below));
    }
    for (; i < len; ++i) {
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

OBLAB_AVX2 void project(std::span<const double> pred, std::span<const double> obstacle,
                        double inv_dt, std::span<double> out, std::span<double> density) {
    const __m256d vinv = _mm256_set1_pd(inv_dt);
    const std::size_t len = pred.size();
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d p = _mm256_loadu_pd(&pred[i]);
        const __m256d l = _mm256_loadu_pd(&obstacle[i]);
        const __m256d u = _mm256_blendv_pd(p, l, _mm256_cmp_pd(p, l, _CMP_LT_OQ));
        _mm256_storeu_pd(&out[i], u);
        _mm256_storeu_pd(&density[i], _mm256_mul_pd(_mm256_sub_pd(u, p), vinv));
    }
    for (; i < len; ++i) {
        const double p = pred[i];
        const double u = p < obstacle[i] ? obstacle[i] : p;
        out[i] = u;
        density[i] = (u - p) * inv_dt;
    }
}

OBLAB_AVX2 double hsum(__m256d v) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, v);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

OBLAB_AVX2 double sum_squares(std::span<const double> x) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    const std::size_t n = x.size();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d a = _mm256_loadu_pd(&x[i]);
        const __m256d b = _mm256_loadu_pd(&x[i + 4]);
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(a, a));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(b, b));
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

OBLAB_AVX2 double sum_squares_diff(std::span<const double> a, std::span<const double> b) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(&a[i + 4]), _mm256_loadu_pd(&b[i + 4]));
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(d0, d0));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(d1, d1));
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

OBLAB_AVX2 double sum_squares_shortfall(std::span<const double> u,
                                        std::span<const double> obstacle) {
    __m256d acc = _mm256_setzero_pd();
    const __m256d zero = _mm256_setzero_pd();
    const std::size_t n = u.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(&u[i]), _mm256_loadu_pd(&obstacle[i]));
        const __m256d neg = _mm256_min_pd(d, zero);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(neg, neg));
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = u[i] - obstacle[i];
        if (d < 0.0) s += d * d;
    }
    return s;
}

#undef OBLAB_AVX2

constexpr KernelTable kAvx2{
    "avx2",         second_difference, centered_difference, axpy,
    penalty_update, project,           sum_squares,         sum_squares_diff,
    sum_squares_shortfall,
};

}  // namespace

const KernelTable* avx2_table() {
    static const bool ok = __builtin_cpu_supports("avx2");
    return ok ? &kAvx2 : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace oblab::kernels
