#pragma once

// Dense inner-loop kernels used by the network layers.
//
// Every kernel has a portable scalar reference and an AVX2/FMA variant. The
// variant is picked once at first use from the CPU feature set; setting the
// environment variable SRKN_ISA=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace srkn::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
    // y = W x + b, W row-major rows x cols; b may be null.
    void (*gemv)(const double* W, const double* x, const double* b, double* y, std::size_t rows,
                 std::size_t cols);
    // dx += W^T dy
    void (*gemv_t_acc)(const double* W, const double* dy, double* dx, std::size_t rows,
                       std::size_t cols);
    // dW += dy x^T
    void (*outer_acc)(const double* dy, const double* x, double* dW, std::size_t rows,
                      std::size_t cols);
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += a x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

bool isa_supported(Isa isa);
const KernelTable& table(Isa isa);

Isa active_isa();
const KernelTable& active();

// Overrides the dispatch decision for the rest of the process. Throws if the
// requested ISA is not supported by this CPU or build.
void force_isa(Isa isa);

namespace detail {
const KernelTable& scalar_table();
#if defined(SRKN_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
}  // namespace detail

// Span front-ends over the active table.

void gemv(std::span<const double> W, std::span<const double> x, std::span<const double> b,
          std::span<double> y);
void gemv_t_acc(std::span<const double> W, std::span<const double> dy, std::span<double> dx);
void outer_acc(std::span<const double> dy, std::span<const double> x, std::span<double> dW);
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace srkn::kernels
