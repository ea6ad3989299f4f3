#pragma once

// Evaluation metrics: reconstruction likelihood, one-step and multi-step
// predictive losses, and the empirical 2-Wasserstein distance between
// generated and observed continuations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "srkn/datasets.hpp"
#include "srkn/model.hpp"

namespace srkn {

enum class FilterMode { mean, sample };

// Noise stream of one sequence in evaluation pass `pass`. Keyed by the
// sequence content (FNV-1a over its bytes), so metric values do not depend on
// the order of a batch and repeated sequences see identical draws.
std::uint64_t sequence_stream(std::uint64_t seed, std::uint64_t pass, std::span<const double> xs);

// Per-step average negative log-likelihood of each sequence under the decoded
// filtering posterior, averaged over sequences. Sample mode draws the noise of
// sequence_loss seeded with sequence_stream(seed, 0, xs).
double recon_ll(const Model& model, const SequenceBatch& batch, FilterMode mode = FilterMode::mean,
                std::uint64_t seed = 0);

// Deterministic filtering of the first `steps` observations (zero noise).
FilterState filter_prefix(const Model& model, std::span<const double> xs, std::size_t steps);

// Log of the Monte-Carlo predictive density of `x` from `state` with S
// one-step rollouts (log-mean-exp); sample j uses derive_seed(seed, j).
double predictive_log_density(const Model& model, const FilterState& state, std::span<const double> x,
                              std::size_t samples, std::uint64_t seed);

// sum_{t=1}^{T-1} -log p(x_{t+1} | x_{1:t}), averaged over sequences. The
// term predicting x_{t+1} uses seed sequence_stream(seed, t, xs).
double one_step_loss(const Model& model, const SequenceBatch& batch, std::size_t switch_samples = 32,
                     std::uint64_t seed = 0);

// Filters the first `prefix` steps, draws n rollouts to the end of each
// sequence (seed sequence_stream(seed, prefix, xs)) and averages over rollouts
// the summed negative log-likelihood of the remaining observations.
double multi_step_loss(const Model& model, const SequenceBatch& batch, std::size_t prefix, std::size_t n = 100,
                       std::uint64_t seed = 0);

// Empirical 2-Wasserstein distance between equal-size point sets: exact
// optimal assignment under squared Euclidean cost, root of the mean cost.
double wasserstein(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

// Minimum-cost perfect assignment of a square cost matrix (row-major n x n).
// Returns column index per row.
std::vector<std::size_t> optimal_assignment(std::span<const double> cost, std::size_t n);

// Indices of the n sequences whose first `prefix` steps are closest (L2) to
// the anchor prefix; ties keep the lower index first.
std::vector<std::size_t> similar_prefix_select(const SequenceBatch& batch, std::span<const double> anchor_prefix,
                                               std::size_t prefix, std::size_t n);

enum class WassersteinMode { suffix, endpoint };

// `count` anchor sequences for the Wasserstein metric: smallest content keys
// first, so the choice is independent of batch order.
std::vector<std::size_t> pick_anchors(const SequenceBatch& batch, std::size_t count, std::uint64_t seed);

// Generated continuations (decoded means) from the anchor's prefix against
// the continuations of the n most similar sequences in `batch`. Rollouts use
// seed sequence_stream(seed, prefix, anchor sequence).
double wasserstein_for_anchor(const Model& model, const SequenceBatch& batch, std::size_t anchor,
                              std::size_t prefix, std::size_t n, WassersteinMode mode, std::uint64_t seed);

struct EvalOptions {
    std::size_t prefix = 2;
    std::size_t samples = 100;
    std::size_t switch_samples = 32;
    std::size_t anchors = 5;
    WassersteinMode wasserstein = WassersteinMode::suffix;
    std::uint64_t seed = 0;
    std::set<std::string> metrics{"recon_ll", "one_step", "multi_step", "w_dist"};
};

struct EvalReport {
    std::string label;
    std::optional<double> recon_ll, one_step, multi_step, w_dist;
    std::size_t n_sequences = 0;
    std::size_t n_samples = 0;
    std::size_t prefix = 0;
    std::size_t switch_samples = 0;
    std::size_t parameter_count = 0;
    std::uint64_t seed = 0;

    std::string to_text() const;
    void save(const std::filesystem::path& path) const;
    // Appends a row to a markdown results table, writing the header first if
    // the file does not exist yet.
    void append_to_table(const std::filesystem::path& path) const;
};

const std::set<std::string>& known_metrics();

EvalReport evaluate(const Model& model, const SequenceBatch& batch, const EvalOptions& opt);

}  // namespace srkn
