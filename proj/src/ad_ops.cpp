#include "srkn/ad_ops.hpp"

#include <algorithm>
#include <cmath>

#include "srkn/errors.hpp"
#include "srkn/gaussian.hpp"
#include "srkn/kalman.hpp"

namespace srkn::ad {

Var diag_log_pdf(std::span<const double> x, Var mean, Var var) {
    const double lp = srkn::diag_gauss_log_pdf(x, mean.value(), var.value());
    std::vector<double> xs(x.begin(), x.end());
    return mean.tape->record(
        {lp}, {mean, var}, [xs = std::move(xs), mi = mean.id, vi = var.id](Tape& t, std::uint32_t self) {
            const double g = t.grad(self)[0];
            auto mu = t.value(mi);
            auto v = t.value(vi);
            auto dm = t.adj(mi);
            auto dv = t.adj(vi);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double d = xs[i] - mu[i];
                if (!dm.empty()) dm[i] += g * d / v[i];
                if (!dv.empty()) dv[i] += g * (-0.5 / v[i] + 0.5 * d * d / (v[i] * v[i]));
            }
        });
}

Var bernoulli_log_pmf(std::span<const double> x, Var p) {
    const double lp = srkn::bernoulli_log_pmf(x, p.value());
    std::vector<double> xs(x.begin(), x.end());
    return p.tape->record({lp}, {p}, [xs = std::move(xs), pi = p.id](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        auto pv = t.value(pi);
        auto dp = t.adj(pi);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double q = pv[i];
            if (q <= kBernoulliEps || q >= 1.0 - kBernoulliEps) continue;
            dp[i] += g * (xs[i] / q - (1.0 - xs[i]) / (1.0 - q));
        }
    });
}

Var kl_diag(Var qm, Var qv, Var pm, Var pv) {
    const double kl = srkn::kl_diag_gauss(qm.value(), qv.value(), pm.value(), pv.value());
    return qm.tape->record(
        {kl}, {qm, qv, pm, pv},
        [a = qm.id, b = qv.id, c = pm.id, d = pv.id](Tape& t, std::uint32_t self) {
            const double g = t.grad(self)[0];
            auto qmv = t.value(a), qvv = t.value(b), pmv = t.value(c), pvv = t.value(d);
            auto dqm = t.adj(a), dqv = t.adj(b), dpm = t.adj(c), dpv = t.adj(d);
            for (std::size_t i = 0; i < qmv.size(); ++i) {
                const double delta = qmv[i] - pmv[i];
                if (!dqm.empty()) dqm[i] += g * delta / pvv[i];
                if (!dpm.empty()) dpm[i] -= g * delta / pvv[i];
                if (!dqv.empty()) dqv[i] += g * 0.5 * (1.0 / pvv[i] - 1.0 / qvv[i]);
                if (!dpv.empty())
                    dpv[i] += g * 0.5 * (1.0 / pvv[i] - (qvv[i] + delta * delta) / (pvv[i] * pvv[i]));
            }
        });
}

Var reparam(Var mean, Var var, std::span<const double> noise) {
    require(mean.size() == noise.size() && var.size() == noise.size(),
            "reparam: dimension mismatch");
    auto mv = mean.value(), vv = var.value();
    std::vector<double> out(noise.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] + std::sqrt(vv[i]) * noise[i];
    std::vector<double> eps(noise.begin(), noise.end());
    return mean.tape->record(std::move(out), {mean, var},
                             [eps = std::move(eps), mi = mean.id, vi = var.id](Tape& t, std::uint32_t self) {
                                 auto g = t.grad(self);
                                 auto v = t.value(vi);
                                 if (auto dm = t.adj(mi); !dm.empty())
                                     for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
                                 if (auto dv = t.adj(vi); !dv.empty())
                                     for (std::size_t i = 0; i < g.size(); ++i)
                                         dv[i] += g[i] * eps[i] * 0.5 / std::sqrt(v[i]);
                             });
}

Var blend(Var alpha, Var bank) {
    const std::size_t K = alpha.size();
    require(K > 0 && bank.size() % K == 0, "blend: bank size must be a multiple of K");
    const std::size_t n = bank.size() / K;
    auto a = alpha.value();
    auto B = bank.value();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < n; ++j) out[j] += a[k] * B[k * n + j];
    return alpha.tape->record(std::move(out), {alpha, bank},
                              [ai = alpha.id, bi = bank.id, K, n](Tape& t, std::uint32_t self) {
                                  auto g = t.grad(self);
                                  auto a = t.value(ai);
                                  auto B = t.value(bi);
                                  if (auto da = t.adj(ai); !da.empty())
                                      for (std::size_t k = 0; k < K; ++k)
                                          for (std::size_t j = 0; j < n; ++j) da[k] += g[j] * B[k * n + j];
                                  if (auto dB = t.adj(bi); !dB.empty())
                                      for (std::size_t k = 0; k < K; ++k)
                                          for (std::size_t j = 0; j < n; ++j) dB[k * n + j] += a[k] * g[j];
                              });
}

Var bank_row(Var bank, std::size_t k, std::size_t m) { return slice(bank, k * 4 * m, 4 * m); }

namespace {

// Shared by both predict overloads; noise_id < 0 means no transition noise.
Var predict_impl(Var post, Var transition, const Var* noise) {
    require(post.size() % 5 == 0, "predict: packed state length must be 5m");
    const std::size_t m = post.size() / 5;
    require(transition.size() == 4 * m, "predict: transition must have length 4m");
    const auto prev = FactoredGaussianState::unpack(post.value());
    const auto A = BlendedTransition::unpack(transition.value());
    std::span<const double> q;
    if (noise) {
        require(noise->size() == 2 * m, "predict: noise must have length 2m");
        q = noise->value();
    }
    PredictResult r = predict_state(prev, A, q);
    if (r.repaired) post.tape->note_repair();
    const std::uint32_t pi = post.id, ai = transition.id;
    const std::int64_t ni = noise ? static_cast<std::int64_t>(noise->id) : -1;
    auto back = [pi, ai, ni, m](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto p = t.value(pi);
        auto A = t.value(ai);
        auto dp = t.adj(pi);
        auto dA = t.adj(ai);
        std::span<double> dq;
        if (ni >= 0) dq = t.adj(static_cast<std::uint32_t>(ni));
        for (std::size_t i = 0; i < m; ++i) {
            const double a11 = A[i], a12 = A[m + i], a21 = A[2 * m + i], a22 = A[3 * m + i];
            const double mu = p[i], ml = p[m + i];
            const double u = p[2 * m + i], l = p[3 * m + i], s = p[4 * m + i];
            const double gmu = g[i], gml = g[m + i];
            const double gu = g[2 * m + i], gl = g[3 * m + i], gs = g[4 * m + i];
            if (!dp.empty()) {
                dp[i] += a11 * gmu + a21 * gml;
                dp[m + i] += a12 * gmu + a22 * gml;
                dp[2 * m + i] += a11 * a11 * gu + a21 * a21 * gl + a11 * a21 * gs;
                dp[3 * m + i] += a12 * a12 * gu + a22 * a22 * gl + a12 * a22 * gs;
                dp[4 * m + i] += 2.0 * a11 * a12 * gu + 2.0 * a21 * a22 * gl +
                                 (a11 * a22 + a12 * a21) * gs;
            }
            if (!dA.empty()) {
                dA[i] += mu * gmu + (2.0 * a11 * u + 2.0 * a12 * s) * gu + (a21 * u + a22 * s) * gs;
                dA[m + i] += ml * gmu + (2.0 * a11 * s + 2.0 * a12 * l) * gu + (a21 * s + a22 * l) * gs;
                dA[2 * m + i] += mu * gml + (2.0 * a21 * u + 2.0 * a22 * s) * gl + (a11 * u + a12 * s) * gs;
                dA[3 * m + i] += ml * gml + (2.0 * a21 * s + 2.0 * a22 * l) * gl + (a11 * s + a12 * l) * gs;
            }
            if (!dq.empty()) {
                dq[i] += gu;
                dq[m + i] += gl;
            }
        }
    };
    if (noise) return post.tape->record(r.state.packed(), {post, transition, *noise}, std::move(back));
    return post.tape->record(r.state.packed(), {post, transition}, std::move(back));
}

}  // namespace

Var predict(Var post, Var transition) { return predict_impl(post, transition, nullptr); }

Var predict(Var post, Var transition, Var trans_noise) {
    return predict_impl(post, transition, &trans_noise);
}

Var kalman_update(Var prior, Var w_mean, Var w_var) {
    require(prior.size() % 5 == 0, "kalman_update: packed state length must be 5m");
    const std::size_t m = prior.size() / 5;
    require(w_mean.size() == m && w_var.size() == m, "kalman_update: observation must have length m");
    const auto p = FactoredGaussianState::unpack(prior.value());
    DiagGaussian w{{w_mean.value().begin(), w_mean.value().end()},
                   {w_var.value().begin(), w_var.value().end()}};
    auto post = srkn::kalman_update(p, w);
    return prior.tape->record(
        post.packed(), {prior, w_mean, w_var},
        [pi = prior.id, wi = w_mean.id, ri = w_var.id, m](Tape& t, std::uint32_t self) {
            auto g = t.grad(self);
            auto p = t.value(pi);
            auto wm = t.value(wi);
            auto wr = t.value(ri);
            auto dp = t.adj(pi);
            auto dw = t.adj(wi);
            auto dr = t.adj(ri);
            for (std::size_t i = 0; i < m; ++i) {
                const double mu = p[i];
                const double u = p[2 * m + i], s = p[4 * m + i];
                const double r = wr[i];
                const double d = u + r;
                const double d2 = d * d;
                const double e = wm[i] - mu;
                const double gmu = g[i], gml = g[m + i];
                const double gu = g[2 * m + i], gl = g[3 * m + i], gs = g[4 * m + i];
                if (!dp.empty()) {
                    dp[i] += gmu * r / d - gml * s / d;
                    dp[m + i] += gml;
                    dp[2 * m + i] += gmu * e * r / d2 - gml * s * e / d2 + gu * r * r / d2 +
                                     gl * s * s / d2 - gs * s * r / d2;
                    dp[3 * m + i] += gl;
                    dp[4 * m + i] += gml * e / d - gl * 2.0 * s / d + gs * r / d;
                }
                if (!dw.empty()) dw[i] += gmu * u / d + gml * s / d;
                if (!dr.empty())
                    dr[i] += -gmu * u * e / d2 - gml * s * e / d2 + gu * u * u / d2 +
                             gl * s * s / d2 + gs * s * u / d2;
            }
        });
}

Var sample_factored(Var state, std::span<const double> noise) {
    require(state.size() % 5 == 0, "sample_factored: packed state length must be 5m");
    const std::size_t m = state.size() / 5;
    require(noise.size() == 2 * m, "sample_factored: noise must have length 2m");
    auto z = srkn::sample_factored(FactoredGaussianState::unpack(state.value()), noise);
    std::vector<double> eps(noise.begin(), noise.end());
    return state.tape->record(
        std::move(z), {state}, [si = state.id, eps = std::move(eps), m](Tape& t, std::uint32_t self) {
            auto g = t.grad(self);
            auto p = t.value(si);
            auto dp = t.adj(si);
            for (std::size_t i = 0; i < m; ++i) {
                const double u = p[2 * m + i], l = p[3 * m + i], s = p[4 * m + i];
                const double su = std::sqrt(u);
                const double v = std::max(l - s * s / u, 1e-300);
                const double sv = std::sqrt(v);
                const double e1 = eps[i], e2 = eps[m + i];
                const double gzu = g[i], gzl = g[m + i];
                dp[i] += gzu;
                dp[m + i] += gzl;
                dp[2 * m + i] += gzu * e1 / (2.0 * su) +
                                 gzl * (-e1 * s / (2.0 * u * su) + e2 * s * s / (2.0 * u * u * sv));
                dp[3 * m + i] += gzl * e2 / (2.0 * sv);
                dp[4 * m + i] += gzl * (e1 / su - e2 * s / (u * sv));
            }
        });
}

Var kl_factored(Var q, Var p) {
    require(q.size() == p.size() && q.size() % 5 == 0, "kl_factored: size mismatch");
    const std::size_t m = q.size() / 5;
    const double kl = srkn::kl_factored(FactoredGaussianState::unpack(q.value()),
                                        FactoredGaussianState::unpack(p.value()));
    return q.tape->record({kl}, {q, p}, [qi = q.id, pi = p.id, m](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        auto qv = t.value(qi);
        auto pv = t.value(pi);
        auto dq = t.adj(qi);
        auto dp = t.adj(pi);
        for (std::size_t i = 0; i < m; ++i) {
            const double qu = qv[2 * m + i], ql = qv[3 * m + i], qs = qv[4 * m + i];
            const double pu = pv[2 * m + i], pl = pv[3 * m + i], ps = pv[4 * m + i];
            const double Dp = pu * pl - ps * ps;
            const double Dq = qu * ql - qs * qs;
            const double d1 = pv[i] - qv[i];
            const double d2 = pv[m + i] - qv[m + i];
            const double N = pl * qu - 2.0 * ps * qs + pu * ql + pl * d1 * d1 - 2.0 * ps * d1 * d2 +
                             pu * d2 * d2;
            const double gd1 = 0.5 * (2.0 * pl * d1 - 2.0 * ps * d2) / Dp;
            const double gd2 = 0.5 * (2.0 * pu * d2 - 2.0 * ps * d1) / Dp;
            if (!dq.empty()) {
                dq[i] -= g * gd1;
                dq[m + i] -= g * gd2;
                dq[2 * m + i] += g * 0.5 * (pl / Dp - ql / Dq);
                dq[3 * m + i] += g * 0.5 * (pu / Dp - qu / Dq);
                dq[4 * m + i] += g * 0.5 * (-2.0 * ps / Dp + 2.0 * qs / Dq);
            }
            if (!dp.empty()) {
                dp[i] += g * gd1;
                dp[m + i] += g * gd2;
                dp[2 * m + i] += g * 0.5 * ((ql + d2 * d2) / Dp - N * pl / (Dp * Dp) + pl / Dp);
                dp[3 * m + i] += g * 0.5 * ((qu + d1 * d1) / Dp - N * pu / (Dp * Dp) + pu / Dp);
                dp[4 * m + i] += g * 0.5 * ((-2.0 * qs - 2.0 * d1 * d2) / Dp + 2.0 * ps * N / (Dp * Dp) -
                                            2.0 * ps / Dp);
            }
        }
    });
}

}  // namespace srkn::ad
