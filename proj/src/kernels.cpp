#include "srkn/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace srkn::kernels {

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(SRKN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!isa_supported(isa))
        throw std::runtime_error("kernel ISA not supported: " + std::string(isa_name(isa)));
#if defined(SRKN_HAVE_AVX2)
    if (isa == Isa::avx2) return detail::avx2_table();
#endif
    return detail::scalar_table();
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("SRKN_ISA")) {
        if (std::string_view(env) == "scalar") return Isa::scalar;
    }
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<int>& selected() {
    static std::atomic<int> isa{static_cast<int>(detect())};
    return isa;
}

}  // namespace

Isa active_isa() { return static_cast<Isa>(selected().load(std::memory_order_relaxed)); }

const KernelTable& active() { return table(active_isa()); }

void force_isa(Isa isa) {
    (void)table(isa);
    selected().store(static_cast<int>(isa), std::memory_order_relaxed);
}

void gemv(std::span<const double> W, std::span<const double> x, std::span<const double> b,
          std::span<double> y) {
    assert(W.size() == y.size() * x.size());
    assert(b.empty() || b.size() == y.size());
    active().gemv(W.data(), x.data(), b.empty() ? nullptr : b.data(), y.data(), y.size(),
                  x.size());
}

void gemv_t_acc(std::span<const double> W, std::span<const double> dy, std::span<double> dx) {
    assert(W.size() == dy.size() * dx.size());
    active().gemv_t_acc(W.data(), dy.data(), dx.data(), dy.size(), dx.size());
}

void outer_acc(std::span<const double> dy, std::span<const double> x, std::span<double> dW) {
    assert(dW.size() == dy.size() * x.size());
    active().outer_acc(dy.data(), x.data(), dW.data(), dy.size(), x.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace srkn::kernels
