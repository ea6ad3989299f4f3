#include "srkn/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "srkn/errors.hpp"

namespace srkn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ContractError(std::string(what) + ": dimension mismatch");
}

}  // namespace

bool DiagGaussian::valid() const {
    if (mean.size() != var.size()) return false;
    for (std::size_t i = 0; i < mean.size(); ++i)
        if (!std::isfinite(mean[i]) || !(var[i] > 0.0) || !std::isfinite(var[i])) return false;
    return true;
}

bool FactoredGaussianState::valid() const {
    const std::size_t n = cov_upper.size();
    if (mean.size() != 2 * n || cov_lower.size() != n || cov_side.size() != n) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(cov_upper[i] > 0.0) || !(cov_lower[i] > 0.0)) return false;
        if (!(cov_upper[i] * cov_lower[i] - cov_side[i] * cov_side[i] > 0.0)) return false;
    }
    return std::all_of(mean.begin(), mean.end(), [](double v) { return std::isfinite(v); });
}

FactoredGaussianState FactoredGaussianState::initial(std::size_t m) {
    return {std::vector<double>(2 * m, 0.0), std::vector<double>(m, 1.0),
            std::vector<double>(m, 1.0), std::vector<double>(m, 0.0)};
}

std::vector<double> FactoredGaussianState::packed() const {
    std::vector<double> out;
    out.reserve(5 * m());
    out.insert(out.end(), mean.begin(), mean.end());
    out.insert(out.end(), cov_upper.begin(), cov_upper.end());
    out.insert(out.end(), cov_lower.begin(), cov_lower.end());
    out.insert(out.end(), cov_side.begin(), cov_side.end());
    return out;
}

FactoredGaussianState FactoredGaussianState::unpack(std::span<const double> p) {
    require(p.size() % 5 == 0, "packed factored state length must be a multiple of 5");
    const std::size_t m = p.size() / 5;
    FactoredGaussianState s;
    s.mean.assign(p.begin(), p.begin() + 2 * m);
    s.cov_upper.assign(p.begin() + 2 * m, p.begin() + 3 * m);
    s.cov_lower.assign(p.begin() + 3 * m, p.begin() + 4 * m);
    s.cov_side.assign(p.begin() + 4 * m, p.end());
    return s;
}

double positive_floor(double x) {
    const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return sp + kVarianceFloor;
}

double positive_floor_grad(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double positive_floor_inverse(double y) {
    require(y > kVarianceFloor, "positive_floor_inverse: value must exceed the floor");
    const double sp = y - kVarianceFloor;
    // softplus^{-1}(v) = log(expm1(v))
    return sp > 30.0 ? sp + std::log1p(-std::exp(-sp)) : std::log(std::expm1(sp));
}

double diag_gauss_log_pdf(std::span<const double> x, std::span<const double> mean,
                          std::span<const double> var) {
    require_same(x.size(), mean.size(), "diag_gauss_log_pdf");
    require_same(x.size(), var.size(), "diag_gauss_log_pdf");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mean[i];
        acc += -0.5 * (kLog2Pi + std::log(var[i])) - d * d / (2.0 * var[i]);
    }
    return acc;
}

double diag_gauss_log_pdf(std::span<const double> x, const DiagGaussian& g) {
    return diag_gauss_log_pdf(x, g.mean, g.var);
}

double bernoulli_log_pmf(std::span<const double> x, std::span<const double> p) {
    require_same(x.size(), p.size(), "bernoulli_log_pmf");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pi = std::clamp(p[i], kBernoulliEps, 1.0 - kBernoulliEps);
        acc += x[i] * std::log(pi) + (1.0 - x[i]) * std::log1p(-pi);
    }
    return acc;
}

double kl_diag_gauss(std::span<const double> qm, std::span<const double> qv,
                     std::span<const double> pm, std::span<const double> pv) {
    require_same(qm.size(), pm.size(), "kl_diag_gauss");
    require_same(qv.size(), pv.size(), "kl_diag_gauss");
    require_same(qm.size(), qv.size(), "kl_diag_gauss");
    double acc = 0.0;
    for (std::size_t i = 0; i < qm.size(); ++i) {
        const double d = qm[i] - pm[i];
        acc += 0.5 * (std::log(pv[i] / qv[i]) + (qv[i] + d * d) / pv[i] - 1.0);
    }
    return acc;
}

double kl_diag_gauss(const DiagGaussian& q, const DiagGaussian& p) {
    return kl_diag_gauss(q.mean, q.var, p.mean, p.var);
}

double kl_factored(const FactoredGaussianState& q, const FactoredGaussianState& p) {
    const std::size_t m = q.m();
    require_same(m, p.m(), "kl_factored");
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double qu = q.cov_upper[i], ql = q.cov_lower[i], qs = q.cov_side[i];
        const double pu = p.cov_upper[i], pl = p.cov_lower[i], ps = p.cov_side[i];
        const double dp = pu * pl - ps * ps;
        const double dq = qu * ql - qs * qs;
        const double d1 = p.mean[i] - q.mean[i];
        const double d2 = p.mean[m + i] - q.mean[m + i];
        const double n = pl * qu - 2.0 * ps * qs + pu * ql + pl * d1 * d1 - 2.0 * ps * d1 * d2 +
                         pu * d2 * d2;
        acc += 0.5 * (n / dp - 2.0 + std::log(dp) - std::log(dq));
    }
    return acc;
}

std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> noise) {
    require_same(g.dim(), noise.size(), "reparam_sample");
    std::vector<double> out(g.dim());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = g.mean[i] + std::sqrt(g.var[i]) * noise[i];
    return out;
}

std::vector<double> sample_factored(const FactoredGaussianState& s,
                                    std::span<const double> noise) {
    const std::size_t m = s.m();
    require_same(noise.size(), 2 * m, "sample_factored");
    std::vector<double> z(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        const double su = std::sqrt(s.cov_upper[i]);
        const double c = s.cov_side[i] / su;
        const double v = std::max(s.cov_lower[i] - c * c, 1e-300);
        z[i] = s.mean[i] + su * noise[i];
        z[m + i] = s.mean[m + i] + c * noise[i] + std::sqrt(v) * noise[m + i];
    }
    return z;
}

double log_factored_pdf(std::span<const double> z, const FactoredGaussianState& s) {
    const std::size_t m = s.m();
    require_same(z.size(), 2 * m, "log_factored_pdf");
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double u = s.cov_upper[i], l = s.cov_lower[i], c = s.cov_side[i];
        const double det = u * l - c * c;
        const double a = z[i] - s.mean[i];
        const double b = z[m + i] - s.mean[m + i];
        const double quad = (l * a * a - 2.0 * c * a * b + u * b * b) / det;
        acc += -kLog2Pi - 0.5 * std::log(det) - 0.5 * quad;
    }
    return acc;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double total = 0.0;
    for (double x : v) total += std::exp(x - mx);
    return mx + std::log(total);
}

}  // namespace srkn
