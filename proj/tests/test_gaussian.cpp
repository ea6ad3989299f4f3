#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "srkn/errors.hpp"
#include "srkn/gaussian.hpp"

using namespace srkn;

namespace {

double naive_log_pdf(const std::vector<double>& x, const std::vector<double>& m,
                     const std::vector<double>& v) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pi = 3.14159265358979323846;
        total += std::log(1.0 / std::sqrt(2.0 * pi * v[i])) - (x[i] - m[i]) * (x[i] - m[i]) / (2.0 * v[i]);
    }
    return total;
}

}  // namespace

TEST_CASE("diag gaussian log density") {
    CHECK(diag_gauss_log_pdf(std::vector{0.0}, std::vector{0.0}, std::vector{1.0}) ==
          doctest::Approx(-0.9189385).epsilon(1e-7));
    CHECK(diag_gauss_log_pdf(std::vector{1.0}, std::vector{0.0}, std::vector{1.0}) ==
          doctest::Approx(-1.4189385).epsilon(1e-7));
    std::vector<double> x{0.3, -0.7}, m{0.0, 0.0}, v{0.5, 2.0};
    CHECK(diag_gauss_log_pdf(x, m, v) == doctest::Approx(naive_log_pdf(x, m, v)).epsilon(1e-13));
    CHECK_THROWS_AS(diag_gauss_log_pdf(std::vector{0.0, 1.0}, std::vector{0.0}, std::vector{1.0}),
                    ContractError);
}

TEST_CASE("diag gaussian density integrates to one") {
    const double mean = 0.4, var = 0.3, h = 1e-3;
    double mass = 0.0;
    for (double x = mean - 12.0; x <= mean + 12.0; x += h)
        mass += std::exp(diag_gauss_log_pdf(std::vector{x}, std::vector{mean}, std::vector{var})) * h;
    CHECK(std::abs(mass - 1.0) < 1e-4);
}

TEST_CASE("bernoulli log pmf") {
    CHECK(bernoulli_log_pmf(std::vector{1.0}, std::vector{1.0 - kBernoulliEps}) ==
          doctest::Approx(std::log(1.0 - kBernoulliEps)));
    CHECK(bernoulli_log_pmf(std::vector{0.0}, std::vector{0.5}) == doctest::Approx(-0.6931472));
    // Probabilities at 0 and 1 are clipped rather than producing -inf.
    CHECK(std::isfinite(bernoulli_log_pmf(std::vector{1.0}, std::vector{0.0})));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::bernoulli_distribution coin(0.3);
    std::vector<double> x(576), p(576);
    double oracle = 0.0;
    for (std::size_t d = 0; d < 576; ++d) {
        x[d] = coin(rng) ? 1.0 : 0.0;
        p[d] = u(rng);
        oracle += x[d] == 1.0 ? std::log(p[d]) : std::log(1.0 - p[d]);
    }
    CHECK(bernoulli_log_pmf(x, p) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK_THROWS_AS(bernoulli_log_pmf(x, std::vector{0.5}), ContractError);
}

TEST_CASE("diagonal KL") {
    DiagGaussian q{{1.0}, {1.0}}, p{{0.0}, {1.0}};
    CHECK(kl_diag_gauss(q, q) == 0.0);
    CHECK(kl_diag_gauss(q, p) == doctest::Approx(0.5));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uv(0.3, 2.0);
    DiagGaussian a, b;
    for (int i = 0; i < 8; ++i) {
        a.mean.push_back(0.5 * nd(rng));
        a.var.push_back(uv(rng));
        b.mean.push_back(0.5 * nd(rng));
        b.var.push_back(uv(rng));
    }
    const int n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    std::vector<double> z(8), eps(8);
    for (int s = 0; s < n; ++s) {
        for (auto& e : eps) e = nd(rng);
        z = reparam_sample(a, eps);
        const double d = diag_gauss_log_pdf(z, a) - diag_gauss_log_pdf(z, b);
        sum += d;
        sum2 += d * d;
    }
    const double mc = sum / n;
    const double se = std::sqrt((sum2 / n - mc * mc) / n);
    CHECK(std::abs(kl_diag_gauss(a, b) - mc) < 3.0 * se);
}

TEST_CASE("diagonal KL is non-negative and zero only at equality") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uv(0.05, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        DiagGaussian q, p;
        for (int i = 0; i < 4; ++i) {
            q.mean.push_back(nd(rng));
            q.var.push_back(uv(rng));
            p.mean.push_back(nd(rng));
            p.var.push_back(uv(rng));
        }
        CHECK(kl_diag_gauss(q, p) > 0.0);
        CHECK(std::abs(kl_diag_gauss(q, q)) < 1e-15);
    }
}

TEST_CASE("reparameterized sampling") {
    DiagGaussian g{{1.5, -2.0}, {0.25, 4.0}};
    CHECK(reparam_sample(g, std::vector{0.0, 0.0}) == g.mean);
    DiagGaussian floored{{0.0}, {kVarianceFloor}};
    CHECK(reparam_sample(floored, std::vector{2.0})[0] == doctest::Approx(std::sqrt(kVarianceFloor) * 2.0));

    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    const int n = 100000;
    std::vector<double> sum(2, 0.0), sum2(2, 0.0);
    for (int s = 0; s < n; ++s) {
        auto z = reparam_sample(g, std::vector{nd(rng), nd(rng)});
        for (int i = 0; i < 2; ++i) {
            sum[i] += z[i];
            sum2[i] += z[i] * z[i];
        }
    }
    for (int i = 0; i < 2; ++i) {
        const double mean = sum[i] / n;
        const double var = sum2[i] / n - mean * mean;
        CHECK(std::abs(mean - g.mean[i]) < 0.01 * std::max(1.0, std::abs(g.mean[i])));
        CHECK(std::abs(var - g.var[i]) < 0.01 * g.var[i]);
    }
}

TEST_CASE("softmax") {
    auto a = softmax(std::vector{0.0, 0.0});
    CHECK(a[0] == doctest::Approx(0.5));
    CHECK(a[1] == doctest::Approx(0.5));
    auto sat = softmax(std::vector{1000.0, 900.0});
    CHECK(std::isfinite(sat[0]));
    CHECK(sat[0] == doctest::Approx(1.0));
    CHECK(sat[1] < 1e-40);

    std::vector<double> l{1.0, 2.0, 3.0};
    double z = 0.0;
    for (double v : l) z += std::exp(v);
    auto s = softmax(l);
    for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(std::exp(l[i]) / z).epsilon(1e-14));
    CHECK(s[0] == doctest::Approx(0.09003).epsilon(1e-4));
    CHECK(s[1] == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(s[2] == doctest::Approx(0.66524).epsilon(1e-4));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(6), shifted(6);
        const double c = nd(rng);
        for (int i = 0; i < 6; ++i) {
            v[i] = nd(rng);
            shifted[i] = v[i] + c;
        }
        auto p = softmax(v), q = softmax(shifted);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
}

TEST_CASE("positive floor map") {
    CHECK(positive_floor(-50.0) >= kVarianceFloor);
    CHECK(positive_floor(-50.0) == doctest::Approx(kVarianceFloor));
    for (double y : {1e-3, 0.1, 1.0, 7.5})
        CHECK(positive_floor(positive_floor_inverse(y)) == doctest::Approx(y).epsilon(1e-12));
    for (double x : {-3.0, 0.0, 2.0}) {
        const double h = 1e-6;
        CHECK(positive_floor_grad(x) ==
              doctest::Approx((positive_floor(x + h) - positive_floor(x - h)) / (2 * h)).epsilon(1e-8));
    }
}

TEST_CASE("factored state sampling, density and KL") {
    FactoredGaussianState s;
    s.mean = {0.5, -1.0};
    s.cov_upper = {2.0};
    s.cov_lower = {1.0};
    s.cov_side = {0.8};
    REQUIRE(s.valid());
    CHECK(FactoredGaussianState::unpack(s.packed()).cov_side == s.cov_side);

    // Sample covariance recovers the 2x2 block.
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    const int n = 200000;
    double su = 0, sl = 0, suu = 0, sll = 0, sul = 0;
    for (int k = 0; k < n; ++k) {
        auto z = sample_factored(s, std::vector{nd(rng), nd(rng)});
        su += z[0];
        sl += z[1];
        suu += z[0] * z[0];
        sll += z[1] * z[1];
        sul += z[0] * z[1];
    }
    const double mu = su / n, ml = sl / n;
    CHECK(mu == doctest::Approx(0.5).epsilon(0.02));
    CHECK(suu / n - mu * mu == doctest::Approx(2.0).epsilon(0.02));
    CHECK(sll / n - ml * ml == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sul / n - mu * ml == doctest::Approx(0.8).epsilon(0.03));

    // Bivariate density against the explicit 2x2 formula.
    const double det = 2.0 * 1.0 - 0.64;
    const double du = 1.0, dl = 0.3;
    const double quad = (1.0 * du * du - 2 * 0.8 * du * dl + 2.0 * dl * dl) / det;
    const double expected = -std::log(2 * 3.14159265358979323846) - 0.5 * std::log(det) - 0.5 * quad;
    CHECK(log_factored_pdf(std::vector{0.5 + du, -1.0 + dl}, s) == doctest::Approx(expected).epsilon(1e-12));

    CHECK(std::abs(kl_factored(s, s)) < 1e-14);
    FactoredGaussianState p = FactoredGaussianState::initial(1);
    // Monte Carlo KL for a non-trivial pair.
    double sum = 0, sum2 = 0;
    for (int k = 0; k < n; ++k) {
        auto z = sample_factored(s, std::vector{nd(rng), nd(rng)});
        const double d = log_factored_pdf(z, s) - log_factored_pdf(z, p);
        sum += d;
        sum2 += d * d;
    }
    const double mc = sum / n, se = std::sqrt((sum2 / n - mc * mc) / n);
    CHECK(std::abs(kl_factored(s, p) - mc) < 3.0 * se);
}

TEST_CASE("log-sum-exp is stable") {
    CHECK(log_sum_exp(std::vector{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
    CHECK(log_sum_exp(std::vector{-1000.0}) == doctest::Approx(-1000.0));
}
