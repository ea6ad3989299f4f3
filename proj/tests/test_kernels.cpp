#include <random>
#include <vector>

#include "doctest.h"
#include "srkn/kernels.hpp"

using namespace srkn::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

}  // namespace

TEST_CASE("scalar reference kernels") {
    const auto& k = table(Isa::scalar);
    std::vector<double> W{1, 2, 3, 4, 5, 6}, x{1, -1, 2}, b{0.5, -0.5}, y(2);
    k.gemv(W.data(), x.data(), b.data(), y.data(), 2, 3);
    CHECK(y[0] == 1 - 2 + 6 + 0.5);
    CHECK(y[1] == 4 - 5 + 12 - 0.5);
    k.gemv(W.data(), x.data(), nullptr, y.data(), 2, 3);
    CHECK(y[0] == 5.0);
    std::vector<double> dy{1, 2}, dx(3, 1.0);
    k.gemv_t_acc(W.data(), dy.data(), dx.data(), 2, 3);
    CHECK(dx == std::vector<double>{1 + 1 + 8, 1 + 2 + 10, 1 + 3 + 12});
    std::vector<double> dW(6, 0.0);
    k.outer_acc(dy.data(), x.data(), dW.data(), 2, 3);
    CHECK(dW == std::vector<double>{1, -1, 2, 2, -2, 4});
    CHECK(k.dot(x.data(), x.data(), 3) == 6.0);
    std::vector<double> acc{1, 1, 1};
    k.axpy(2.0, x.data(), acc.data(), 3);
    CHECK(acc == std::vector<double>{3, -1, 5});
}

TEST_CASE("SIMD kernels match the scalar reference") {
    if (!isa_supported(Isa::avx2)) {
        MESSAGE("AVX2 unavailable; skipping equivalence check");
        return;
    }
    const auto& s = table(Isa::scalar);
    const auto& v = table(Isa::avx2);
    std::mt19937_64 rng(42);
    for (std::size_t rows : {1u, 3u, 4u, 5u, 17u, 64u}) {
        for (std::size_t cols : {1u, 2u, 3u, 4u, 7u, 8u, 33u, 576u}) {
            auto W = random_vec(rng, rows * cols);
            auto x = random_vec(rng, cols);
            auto b = random_vec(rng, rows);
            std::vector<double> ys(rows), yv(rows);
            s.gemv(W.data(), x.data(), b.data(), ys.data(), rows, cols);
            v.gemv(W.data(), x.data(), b.data(), yv.data(), rows, cols);
            for (std::size_t i = 0; i < rows; ++i) CHECK(yv[i] == doctest::Approx(ys[i]).epsilon(1e-12));

            auto dy = random_vec(rng, rows);
            std::vector<double> dxs(cols, 0.5), dxv(cols, 0.5);
            s.gemv_t_acc(W.data(), dy.data(), dxs.data(), rows, cols);
            v.gemv_t_acc(W.data(), dy.data(), dxv.data(), rows, cols);
            for (std::size_t j = 0; j < cols; ++j) CHECK(dxv[j] == doctest::Approx(dxs[j]).epsilon(1e-12));

            std::vector<double> dWs(rows * cols, 0.1), dWv(rows * cols, 0.1);
            s.outer_acc(dy.data(), x.data(), dWs.data(), rows, cols);
            v.outer_acc(dy.data(), x.data(), dWv.data(), rows, cols);
            for (std::size_t i = 0; i < rows * cols; ++i) CHECK(dWv[i] == doctest::Approx(dWs[i]).epsilon(1e-12));

            CHECK(v.dot(W.data(), W.data(), rows * cols) ==
                  doctest::Approx(s.dot(W.data(), W.data(), rows * cols)).epsilon(1e-12));
            auto as = b, av = b;
            s.axpy(0.7, dy.data(), as.data(), rows);
            v.axpy(0.7, dy.data(), av.data(), rows);
            for (std::size_t i = 0; i < rows; ++i) CHECK(av[i] == doctest::Approx(as[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("dispatch can be forced to the reference path") {
    const Isa before = active_isa();
    force_isa(Isa::scalar);
    CHECK(active_isa() == Isa::scalar);
    if (isa_supported(before)) force_isa(before);
    CHECK(active_isa() == before);
}
