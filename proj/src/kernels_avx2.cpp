// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "srkn/kernels.hpp"

#include <immintrin.h>

namespace srkn::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void gemv_avx2(const double* W, const double* x, const double* b, double* y, std::size_t rows,
               std::size_t cols) {
    std::size_t r = 0;
    // Four rows at a time share the x loads.
    for (; r + 4 <= rows; r += 4) {
        const double* w0 = W + r * cols;
        const double* w1 = w0 + cols;
        const double* w2 = w1 + cols;
        const double* w3 = w2 + cols;
        __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
        __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            const __m256d vx = _mm256_loadu_pd(x + c);
            a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), vx, a0);
            a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), vx, a1);
            a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), vx, a2);
            a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), vx, a3);
        }
        double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
        for (; c < cols; ++c) {
            s0 += w0[c] * x[c];
            s1 += w1[c] * x[c];
            s2 += w2[c] * x[c];
            s3 += w3[c] * x[c];
        }
        if (b) {
            s0 += b[r];
            s1 += b[r + 1];
            s2 += b[r + 2];
            s3 += b[r + 3];
        }
        y[r] = s0;
        y[r + 1] = s1;
        y[r + 2] = s2;
        y[r + 3] = s3;
    }
    for (; r < rows; ++r) {
        const double acc = dot_avx2(W + r * cols, x, cols);
        y[r] = b ? acc + b[r] : acc;
    }
}

void gemv_t_acc_avx2(const double* W, const double* dy, double* dx, std::size_t rows,
                     std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        axpy_avx2(g, W + r * cols, dx, cols);
    }
}

void outer_acc_avx2(const double* dy, const double* x, double* dW, std::size_t rows,
                    std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        axpy_avx2(g, x, dW + r * cols, cols);
    }
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable t{gemv_avx2, gemv_t_acc_avx2, outer_acc_avx2, dot_avx2, axpy_avx2};
    return t;
}

}  // namespace srkn::kernels::detail
