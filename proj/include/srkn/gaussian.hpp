#pragma once

// Distribution primitives shared by the model, the training objective and the
// evaluation metrics. All densities are returned in log space.

#include <cstddef>
#include <span>
#include <vector>

namespace srkn {

// Lower bound for every variance produced by a network head.
inline constexpr double kVarianceFloor = 1e-4;
// Bernoulli probabilities are clipped into [eps, 1 - eps].
inline constexpr double kBernoulliEps = 1e-6;

struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> var;

    std::size_t dim() const { return mean.size(); }
    bool valid() const;
};

// Gaussian over z in R^{2m} whose covariance is four diagonal m x m blocks:
// [[diag(upper), diag(side)], [diag(side), diag(lower)]]. Coordinate i of the
// upper half is correlated only with coordinate i of the lower half.
struct FactoredGaussianState {
    std::vector<double> mean;  // 2m
    std::vector<double> cov_upper;
    std::vector<double> cov_lower;
    std::vector<double> cov_side;

    std::size_t m() const { return cov_upper.size(); }
    bool valid() const;

    // Zero mean, unit marginal variances, no cross-covariance.
    static FactoredGaussianState initial(std::size_t m);

    // [mean | upper | lower | side], length 5m.
    std::vector<double> packed() const;
    static FactoredGaussianState unpack(std::span<const double> packed);
};

// Smooth positive map with minimum kVarianceFloor: softplus(x) + floor.
double positive_floor(double x);
// d positive_floor / dx
double positive_floor_grad(double x);
// Inverse of positive_floor for y > floor.
double positive_floor_inverse(double y);

double diag_gauss_log_pdf(std::span<const double> x, std::span<const double> mean,
                          std::span<const double> var);
double diag_gauss_log_pdf(std::span<const double> x, const DiagGaussian& g);

double bernoulli_log_pmf(std::span<const double> x, std::span<const double> p);

double kl_diag_gauss(std::span<const double> q_mean, std::span<const double> q_var,
                     std::span<const double> p_mean, std::span<const double> p_var);
double kl_diag_gauss(const DiagGaussian& q, const DiagGaussian& p);

// Sum over coordinates of the closed-form KL between bivariate Gaussians
// formed by (upper_i, lower_i) pairs.
double kl_factored(const FactoredGaussianState& q, const FactoredGaussianState& p);

std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> noise);

// z = mean + L eps with L the per-coordinate 2x2 Cholesky factor; noise has
// length 2m laid out [eps_upper | eps_lower].
std::vector<double> sample_factored(const FactoredGaussianState& s, std::span<const double> noise);

double log_factored_pdf(std::span<const double> z, const FactoredGaussianState& s);

std::vector<double> softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> v);

}  // namespace srkn
