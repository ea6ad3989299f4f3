#include <cmath>
#include <random>

#include "doctest.h"
#include "fd.hpp"
#include "srkn/ad_ops.hpp"
#include "srkn/gaussian.hpp"

using namespace srkn;
using srkn::testing::max_grad_error;
using V = std::vector<ad::Var>;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

std::vector<double> randpos(std::mt19937_64& rng, std::size_t n, double lo = 0.2, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Packed factored state with comfortably positive-definite blocks.
std::vector<double> packed_state(std::mt19937_64& rng, std::size_t m) {
    FactoredGaussianState s;
    s.mean = randn(rng, 2 * m);
    s.cov_upper = randpos(rng, m, 0.3, 2.0);
    s.cov_lower = randpos(rng, m, 0.3, 2.0);
    std::uniform_real_distribution<double> c(-0.6, 0.6);
    for (std::size_t i = 0; i < m; ++i) s.cov_side.push_back(c(rng) * std::sqrt(s.cov_upper[i] * s.cov_lower[i]));
    return s.packed();
}

std::vector<double> packed_transition(std::mt19937_64& rng, std::size_t m) {
    std::vector<double> a;
    for (std::size_t b = 0; b < 4; ++b) {
        auto part = randn(rng, m, 0.3);
        if (b == 0 || b == 3)
            for (auto& x : part) x += 1.0;
        a.insert(a.end(), part.begin(), part.end());
    }
    return a;
}

// Weighted sum so every output entry gets a distinct adjoint.
ad::Var weighted(ad::Tape& t, ad::Var v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ad::sum(v * t.constant(randn(rng, v.size())));
}

}  // namespace

TEST_CASE("elementwise ops and reductions") {
    std::mt19937_64 rng(1);
    auto a = randn(rng, 5), b = randpos(rng, 5);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, x[0] + x[1], 1); }, {a, b}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, x[0] - x[1], 2); }, {a, b}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, x[0] * x[1], 3); }, {a, b}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::scale(x[0], -2.5), 4); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::add_scalar(ad::neg(x[0]), 3.0), 4); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::tanh(x[0]), 5); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::sigmoid(x[0]), 6); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::relu(x[0]), 7); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::exp(x[0]), 8); }, {a}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::log(x[0]), 9); }, {b}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& x) { return weighted(t, ad::positive(x[0]), 10); }, {a}) < 1e-7);
    CHECK(max_grad_error(
              [](ad::Tape& t, const V& x) {
                  std::vector<ad::Var> terms{ad::sum(x[0]), ad::sum(x[1] * x[1]), ad::sum(x[0] * x[1])};
                  return weighted(t, ad::sum_all(terms), 11);
              },
              {a, b}) < 1e-7);
    CHECK(max_grad_error(
              [](ad::Tape& t, const V& x) {
                  return weighted(t, ad::concat({ad::slice(x[0], 1, 3), x[1], ad::slice(x[0], 0, 1)}), 12);
              },
              {a, b}) < 1e-7);
}

TEST_CASE("linear layer and normalizers") {
    std::mt19937_64 rng(2);
    auto W = randn(rng, 12), bias = randn(rng, 3), x = randn(rng, 4);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::linear(v[0], v[1], v[2]), 1); },
                         {W, bias, x}) < 1e-7);
    auto logits = randn(rng, 4, 2.0);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::softmax(v[0]), 2); }, {logits}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::log_softmax(v[0]), 3); }, {logits}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape&, const V& v) { return ad::log_sum_exp(v[0]); }, {logits}) < 1e-7);

    ad::Tape t;
    auto out = ad::linear(t.constant(W), t.constant(bias), t.constant(x));
    for (std::size_t r = 0; r < 3; ++r) {
        double y = bias[r];
        for (std::size_t c = 0; c < 4; ++c) y += W[r * 4 + c] * x[c];
        CHECK(out[r] == doctest::Approx(y).epsilon(1e-14));
    }
}

TEST_CASE("distribution ops") {
    std::mt19937_64 rng(3);
    const std::size_t d = 4;
    auto xs = randn(rng, d);
    auto m1 = randn(rng, d), v1 = randpos(rng, d), m2 = randn(rng, d), v2 = randpos(rng, d);
    CHECK(max_grad_error([&](ad::Tape&, const V& v) { return ad::diag_log_pdf(xs, v[0], v[1]); }, {m1, v1}) < 1e-7);
    CHECK(max_grad_error([](ad::Tape&, const V& v) { return ad::kl_diag(v[0], v[1], v[2], v[3]); },
                         {m1, v1, m2, v2}) < 1e-7);
    auto noise = randn(rng, d);
    CHECK(max_grad_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::reparam(v[0], v[1], noise), 4); },
                         {m1, v1}) < 1e-7);
    std::vector<double> bits{1, 0, 1, 1}, probs{0.2, 0.7, 0.5, 0.9};
    CHECK(max_grad_error([&](ad::Tape&, const V& v) { return ad::bernoulli_log_pmf(bits, v[0]); }, {probs}) < 1e-7);

    ad::Tape t;
    CHECK(ad::diag_log_pdf(xs, t.constant(m1), t.constant(v1)).scalar() ==
          doctest::Approx(diag_gauss_log_pdf(xs, m1, v1)).epsilon(1e-14));
    CHECK(ad::kl_diag(t.constant(m1), t.constant(v1), t.constant(m2), t.constant(v2)).scalar() ==
          doctest::Approx(kl_diag_gauss(m1, v1, m2, v2)).epsilon(1e-14));
}

TEST_CASE("transition ops") {
    std::mt19937_64 rng(4);
    const std::size_t m = 3, K = 3;
    std::vector<double> bank;
    for (std::size_t k = 0; k < K; ++k) {
        auto row = packed_transition(rng, m);
        bank.insert(bank.end(), row.begin(), row.end());
    }
    auto alpha = softmax(randn(rng, K));
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::blend(v[0], v[1]), 1); },
                         {alpha, bank}) < 1e-7);
    CHECK(max_grad_error([m](ad::Tape& t, const V& v) { return weighted(t, ad::bank_row(v[0], 1, m), 2); },
                         {bank}) < 1e-7);

    auto post = packed_state(rng, m);
    auto A = packed_transition(rng, m);
    auto q = randpos(rng, 2 * m, 0.05, 0.3);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::predict(v[0], v[1]), 3); },
                         {post, A}) < 1e-6);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::predict(v[0], v[1], v[2]), 4); },
                         {post, A, q}) < 1e-6);
    auto wm = randn(rng, m), wv = randpos(rng, m);
    CHECK(max_grad_error([](ad::Tape& t, const V& v) { return weighted(t, ad::kalman_update(v[0], v[1], v[2]), 5); },
                         {post, wm, wv}) < 1e-6);
    auto nz = randn(rng, 2 * m);
    CHECK(max_grad_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::sample_factored(v[0], nz), 6); },
                         {post}) < 1e-6);
    auto other = packed_state(rng, m);
    CHECK(max_grad_error([](ad::Tape&, const V& v) { return ad::kl_factored(v[0], v[1]); }, {post, other}) < 1e-6);
}

TEST_CASE("chained filter step gradient") {
    std::mt19937_64 rng(5);
    const std::size_t m = 2;
    auto post = packed_state(rng, m);
    auto A = packed_transition(rng, m);
    auto q = randpos(rng, 2 * m, 0.05, 0.3);
    auto wm = randn(rng, m), wv = randpos(rng, m);
    auto nz = randn(rng, 2 * m);
    auto f = [&](ad::Tape& t, const V& v) {
        auto prior = ad::predict(v[0], v[1], v[2]);
        auto upd = ad::kalman_update(prior, v[3], v[4]);
        auto z = ad::sample_factored(upd, nz);
        return ad::sum_all(std::vector<ad::Var>{weighted(t, z, 7), ad::kl_factored(upd, prior)});
    };
    CHECK(max_grad_error(f, {post, A, q, wm, wv}) < 1e-6);
}

TEST_CASE("tape bookkeeping") {
    ad::Tape t;
    auto c = t.constant(std::vector{1.0, 2.0});
    auto v = t.variable(std::vector{3.0, 4.0});
    auto out = ad::sum(c * v);
    CHECK_FALSE(t.requires_grad(c));
    CHECK(t.requires_grad(out));
    t.backward(out);
    CHECK(t.grad(v)[0] == 1.0);
    CHECK(t.grad(v)[1] == 2.0);
    CHECK(out.scalar() == 11.0);
}
