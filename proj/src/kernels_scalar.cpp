#include "srkn/kernels.hpp"

namespace srkn::kernels::detail {

namespace {

void gemv_scalar(const double* W, const double* x, const double* b, double* y, std::size_t rows,
                 std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = W + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = b ? acc + b[r] : acc;
    }
}

void gemv_t_acc_scalar(const double* W, const double* dy, double* dx, std::size_t rows,
                       std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        const double* row = W + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dx[c] += g * row[c];
    }
}

void outer_acc_scalar(const double* dy, const double* x, double* dW, std::size_t rows,
                      std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        double* row = dW + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
    }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{gemv_scalar, gemv_t_acc_scalar, outer_acc_scalar, dot_scalar,
                               axpy_scalar};
    return t;
}

}  // namespace srkn::kernels::detail
