#pragma once

// Factorized Kalman machinery on the structured latent state.
//
// A transition matrix is 2m x 2m made of four diagonal m x m blocks
//   A = [[diag(a11), diag(a12)], [diag(a21), diag(a22)]]
// so A Sigma A^T keeps the three-vector covariance structure exactly and
// every operation reduces to independent 2x2 problems per coordinate.

#include <cstddef>
#include <span>
#include <vector>

#include "srkn/gaussian.hpp"

namespace srkn {

struct BlendedTransition {
    std::vector<double> a11, a12, a21, a22;

    std::size_t m() const { return a11.size(); }
    static BlendedTransition identity(std::size_t m);
    // [a11 | a12 | a21 | a22], length 4m.
    std::vector<double> packed() const;
    static BlendedTransition unpack(std::span<const double> packed);
};

// K base matrices plus the (already positive) transition noise.
struct TransitionBank {
    std::size_t K = 0;
    std::size_t m = 0;
    std::vector<double> blocks;       // K x 4m, row k = packed A^(k)
    std::vector<double> trans_noise;  // 2m

    BlendedTransition base(std::size_t k) const;
};

// H = [I_m 0]: the first m entries of the latent state.
std::vector<double> emit(std::span<const double> z, std::size_t m);

BlendedTransition blend_transition(std::span<const double> alpha, const TransitionBank& bank);

// Lower clamp for predicted marginal variances.
inline constexpr double kMinPredictVariance = 1e-10;

struct PredictResult {
    FactoredGaussianState state;
    // Set when a 2x2 block lost positive definiteness (a clamped marginal or
    // a shrunk side covariance).
    bool repaired = false;
};

// Prior of the next state: A mu, A Sigma A^T + diag(noise). noise may be empty
// (no transition noise).
PredictResult predict_state(const FactoredGaussianState& post, const BlendedTransition& A,
                            std::span<const double> noise);

// Posterior after observing w ~ N(H z, diag(w.var)).
FactoredGaussianState kalman_update(const FactoredGaussianState& prior, const DiagGaussian& w);

// Shrinks side covariances so every 2x2 block is positive definite; returns
// true if anything changed.
bool repair_block(double u, double l, double& s);

}  // namespace srkn
