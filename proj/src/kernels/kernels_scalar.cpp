#include "kernels_impl.hpp"

#include <cmath>

namespace sls::kernels::detail {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double abs_sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i]);
    return acc;
}

void weighted_gram_scalar(const double* x, std::size_t ldx, std::size_t m, std::size_t n,
                          const double* w, double* c) {
    for (std::size_t j = 0; j < n; ++j) {
        const double* xj = x + j * ldx;
        for (std::size_t i = j; i < n; ++i) {
            const double* xi = x + i * ldx;
            double acc = 0.0;
            for (std::size_t r = 0; r < m; ++r) acc += xi[r] * w[r] * xj[r];
            c[i + j * n] += acc;
            if (i != j) c[j + i * n] += acc;
        }
    }
}

void linf_dist_scalar(const double* soa, std::size_t stride, std::size_t dim, std::size_t count,
                      const double* query, double* out) {
    for (std::size_t j = 0; j < count; ++j) out[j] = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double* row = soa + d * stride;
        const double q = query[d];
        for (std::size_t j = 0; j < count; ++j) {
            const double v = std::fabs(row[j] - q);
            if (v > out[j]) out[j] = v;
        }
    }
}

}  // namespace

const KernelTable& scalar_table_impl() {
    static const KernelTable table{
        "scalar", dot_scalar, axpy_scalar, abs_sum_scalar, weighted_gram_scalar, linf_dist_scalar,
    };
    return table;
}

}  // namespace sls::kernels::detail
