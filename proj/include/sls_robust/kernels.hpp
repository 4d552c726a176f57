#pragma once

// Data-parallel inner loops used by the solver, the FIR algebra and the
// S-slope scan. Every kernel has a scalar reference implementation and,
// on x86-64, an AVX2/FMA variant. The active table is picked once at
// startup from CPUID; SLS_ROBUST_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace sls::kernels {

struct KernelTable {
    std::string_view name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*abs_sum)(const double* x, std::size_t n);

    // c (n x n, column-major, symmetric on entry) += X^T diag(w) X, where X
    // is m x n column-major with leading dimension ldx.
    void (*weighted_gram)(const double* x, std::size_t ldx, std::size_t m, std::size_t n,
                          const double* w, double* c);

    // out[j] = max_d |soa[d * stride + j] - query[d]| for j in [0, count).
    void (*linf_dist)(const double* soa, std::size_t stride, std::size_t dim,
                      std::size_t count, const double* query, double* out);
};

enum class Backend { Scalar, Avx2 };

const KernelTable& scalar_table();
// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

const KernelTable& active();
// Overrides the runtime choice; returns false if the backend is unavailable.
bool select(Backend backend);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double abs_sum(std::span<const double> x) {
    return active().abs_sum(x.data(), x.size());
}

}  // namespace sls::kernels
