#pragma once

// Differentiable versions of the distribution and factorized-Kalman
// primitives. Each forward pass calls the plain routine from gaussian.hpp /
// kalman.hpp; the adjoints are hand-derived and checked against central
// differences in the unit tests.
//
// Factored states travel on the tape packed as [mean (2m) | upper | lower | side].

#include <span>

#include "srkn/autodiff.hpp"

namespace srkn::ad {

Var diag_log_pdf(std::span<const double> x, Var mean, Var var);
Var bernoulli_log_pmf(std::span<const double> x, Var p);
Var kl_diag(Var q_mean, Var q_var, Var p_mean, Var p_var);
Var reparam(Var mean, Var var, std::span<const double> noise);

// alpha (K) times bank (K x 4m, packed base matrices) -> packed blend (4m).
Var blend(Var alpha, Var bank);
// Row k of the bank as a packed transition (4m).
Var bank_row(Var bank, std::size_t k, std::size_t m);

Var predict(Var post, Var transition);
Var predict(Var post, Var transition, Var trans_noise);
Var kalman_update(Var prior, Var w_mean, Var w_var);
Var sample_factored(Var state, std::span<const double> noise);
Var kl_factored(Var q, Var p);

}  // namespace srkn::ad
