#include "srkn/kalman.hpp"

#include <cassert>
#include <cmath>

#include "srkn/errors.hpp"

namespace srkn {

BlendedTransition BlendedTransition::identity(std::size_t m) {
    return {std::vector<double>(m, 1.0), std::vector<double>(m, 0.0),
            std::vector<double>(m, 0.0), std::vector<double>(m, 1.0)};
}

std::vector<double> BlendedTransition::packed() const {
    std::vector<double> out;
    out.reserve(4 * m());
    for (const auto* v : {&a11, &a12, &a21, &a22}) out.insert(out.end(), v->begin(), v->end());
    return out;
}

BlendedTransition BlendedTransition::unpack(std::span<const double> p) {
    require(p.size() % 4 == 0, "packed transition length must be a multiple of 4");
    const std::size_t m = p.size() / 4;
    BlendedTransition A;
    A.a11.assign(p.begin(), p.begin() + m);
    A.a12.assign(p.begin() + m, p.begin() + 2 * m);
    A.a21.assign(p.begin() + 2 * m, p.begin() + 3 * m);
    A.a22.assign(p.begin() + 3 * m, p.end());
    return A;
}

BlendedTransition TransitionBank::base(std::size_t k) const {
    require(k < K, "transition bank index out of range");
    return BlendedTransition::unpack(
        std::span<const double>(blocks).subspan(k * 4 * m, 4 * m));
}

std::vector<double> emit(std::span<const double> z, std::size_t m) {
    require(z.size() == 2 * m, "emit: latent state must have length 2m");
    return {z.begin(), z.begin() + static_cast<std::ptrdiff_t>(m)};
}

BlendedTransition blend_transition(std::span<const double> alpha, const TransitionBank& bank) {
    require(alpha.size() == bank.K, "blend_transition: alpha must have K entries");
    const std::size_t n = 4 * bank.m;
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < bank.K; ++k) {
        const double w = alpha[k];
        const double* row = bank.blocks.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += w * row[j];
    }
    return BlendedTransition::unpack(out);
}

bool repair_block(double u, double l, double& s) {
    const double limit = std::sqrt(u * l) * (1.0 - 1e-9);
    if (std::abs(s) < limit) return false;
    s = std::copysign(limit, s);
    return true;
}

PredictResult predict_state(const FactoredGaussianState& post, const BlendedTransition& A,
                            std::span<const double> noise) {
    const std::size_t m = post.m();
    require(A.m() == m, "predict_state: transition size mismatch");
    require(noise.empty() || noise.size() == 2 * m, "predict_state: noise must have length 2m");
    PredictResult r;
    auto& out = r.state;
    out.mean.resize(2 * m);
    out.cov_upper.resize(m);
    out.cov_lower.resize(m);
    out.cov_side.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double a11 = A.a11[i], a12 = A.a12[i], a21 = A.a21[i], a22 = A.a22[i];
        const double mu = post.mean[i], ml = post.mean[m + i];
        const double u = post.cov_upper[i], l = post.cov_lower[i], s = post.cov_side[i];
        out.mean[i] = a11 * mu + a12 * ml;
        out.mean[m + i] = a21 * mu + a22 * ml;
        double nu = a11 * a11 * u + 2.0 * a11 * a12 * s + a12 * a12 * l;
        double nl = a21 * a21 * u + 2.0 * a21 * a22 * s + a22 * a22 * l;
        double ns = a11 * a21 * u + (a11 * a22 + a12 * a21) * s + a12 * a22 * l;
        if (!noise.empty()) {
            nu += noise[i];
            nl += noise[m + i];
        }
        if (!std::isfinite(nu) || !std::isfinite(nl) || !std::isfinite(ns))
            throw NumericError("predict_state: non-finite covariance");
        // A rank-deficient base row can collapse a marginal; keep it positive.
        if (nu < kMinPredictVariance) {
            nu = kMinPredictVariance;
            r.repaired = true;
        }
        if (nl < kMinPredictVariance) {
            nl = kMinPredictVariance;
            r.repaired = true;
        }
        r.repaired |= repair_block(nu, nl, ns);
        out.cov_upper[i] = nu;
        out.cov_lower[i] = nl;
        out.cov_side[i] = ns;
    }
    assert(out.valid());
    return r;
}

FactoredGaussianState kalman_update(const FactoredGaussianState& prior, const DiagGaussian& w) {
    const std::size_t m = prior.m();
    require(w.dim() == m && w.var.size() == m, "kalman_update: observation must have length m");
    FactoredGaussianState out = prior;
    for (std::size_t i = 0; i < m; ++i) {
        const double u = prior.cov_upper[i], l = prior.cov_lower[i], s = prior.cov_side[i];
        const double r = w.var[i];
        const double d = u + r;
        const double gain_u = u / d;
        const double gain_l = s / d;
        const double e = w.mean[i] - prior.mean[i];
        out.mean[i] = prior.mean[i] + gain_u * e;
        out.mean[m + i] = prior.mean[m + i] + gain_l * e;
        out.cov_upper[i] = u * r / d;
        out.cov_lower[i] = l - gain_l * s;
        out.cov_side[i] = s * r / d;
    }
    assert(out.valid());
    return out;
}

}  // namespace srkn
