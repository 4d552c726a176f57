// Compiled with -mavx2 -mfma. Only reached after the dispatcher has
// confirmed CPU support, so nothing here may be inlined into other units:
// keep helpers in the anonymous namespace and avoid std templates.

#include "kernels_impl.hpp"

#include <immintrin.h>

namespace sls::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline __m256d vabs(__m256d v) {
    return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double abs_sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, vabs(_mm256_loadu_pd(x + i)));
    double total = hsum(acc);
    for (; i < n; ++i) total += x[i] < 0.0 ? -x[i] : x[i];
    return total;
}

constexpr std::size_t kGramChunk = 256;

// Four weighted dots sharing the xw operand.
inline void dot4(const double* x0, const double* x1, const double* x2, const double* x3,
                 const double* xw, std::size_t len, double* out) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t r = 0;
    for (; r + 4 <= len; r += 4) {
        const __m256d v = _mm256_loadu_pd(xw + r);
        a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x0 + r), v, a0);
        a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x1 + r), v, a1);
        a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x2 + r), v, a2);
        a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x3 + r), v, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; r < len; ++r) {
        s0 += x0[r] * xw[r];
        s1 += x1[r] * xw[r];
        s2 += x2[r] * xw[r];
        s3 += x3[r] * xw[r];
    }
    out[0] = s0;
    out[1] = s1;
    out[2] = s2;
    out[3] = s3;
}

void weighted_gram_avx2(const double* x, std::size_t ldx, std::size_t m, std::size_t n,
                        const double* w, double* c) {
    if (n == 0) return;
    // Lower triangle accumulated chunk by chunk over rows so the active
    // slice of X stays cache resident.
    double* xw = static_cast<double*>(_mm_malloc(sizeof(double) * kGramChunk, 32));
    double sums[4];
    for (std::size_t r0 = 0; r0 < m; r0 += kGramChunk) {
        const std::size_t len = (m - r0 < kGramChunk) ? m - r0 : kGramChunk;
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = x + j * ldx + r0;
            std::size_t r = 0;
            for (; r + 4 <= len; r += 4) {
                _mm256_store_pd(xw + r, _mm256_mul_pd(_mm256_loadu_pd(xj + r), _mm256_loadu_pd(w + r0 + r)));
            }
            for (; r < len; ++r) xw[r] = xj[r] * w[r0 + r];

            std::size_t i = j;
            for (; i + 4 <= n; i += 4) {
                dot4(x + i * ldx + r0, x + (i + 1) * ldx + r0, x + (i + 2) * ldx + r0,
                     x + (i + 3) * ldx + r0, xw, len, sums);
                c[i + j * n] += sums[0];
                c[i + 1 + j * n] += sums[1];
                c[i + 2 + j * n] += sums[2];
                c[i + 3 + j * n] += sums[3];
            }
            for (; i < n; ++i) c[i + j * n] += dot_avx2(x + i * ldx + r0, xw, len);
        }
    }
    _mm_free(xw);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = j + 1; i < n; ++i) c[j + i * n] = c[i + j * n];
    }
}

void linf_dist_avx2(const double* soa, std::size_t stride, std::size_t dim, std::size_t count,
                    const double* query, double* out) {
    std::size_t j = 0;
    for (; j + 4 <= count; j += 4) {
        __m256d best = _mm256_setzero_pd();
        for (std::size_t d = 0; d < dim; ++d) {
            const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(soa + d * stride + j), _mm256_set1_pd(query[d]));
            best = _mm256_max_pd(best, vabs(diff));
        }
        _mm256_storeu_pd(out + j, best);
    }
    for (; j < count; ++j) {
        double best = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            double v = soa[d * stride + j] - query[d];
            v = v < 0.0 ? -v : v;
            if (v > best) best = v;
        }
        out[j] = best;
    }
}

constexpr KernelTable kAvx2Table{
    "avx2", dot_avx2, axpy_avx2, abs_sum_avx2, weighted_gram_avx2, linf_dist_avx2,
};

}  // namespace

const KernelTable& avx2_table_impl() { return kAvx2Table; }

}  // namespace sls::kernels::detail
