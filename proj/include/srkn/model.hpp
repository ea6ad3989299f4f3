#pragma once

// The switching recurrent Kalman network: an encoder to a latent observation
// with uncertainty, a GRU memory over the switching variable, a bank of
// structured linear transitions blended by softmax(s_t), the factorized
// Kalman update, and a decoder back to observation space.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srkn/autodiff.hpp"
#include "srkn/gaussian.hpp"
#include "srkn/kalman.hpp"
#include "srkn/params.hpp"

namespace srkn {

enum class InputKind { real, image };
enum class Activation { tanh, relu };

struct ModelConfig {
    InputKind input_kind = InputKind::real;
    std::size_t obs_dim = 2;  // 576 for 24 x 24 frames
    std::size_t m = 4;
    std::size_t K = 4;
    std::size_t s_dim = 0;  // 0 means s_dim = K
    std::size_t gru_hidden = 16;
    std::vector<std::size_t> encoder_hidden{32};
    std::vector<std::size_t> decoder_hidden{32};
    std::vector<std::size_t> trans_hidden{32};
    std::vector<std::size_t> inf_hidden{32};
    Activation activation = Activation::tanh;
    double beta_rec = 1.0;
    double beta_z = 0.1;
    double beta_s = 0.1;
    double beta_pred = 1.0;
    std::size_t bandwidth = 0;
    // false: the RKN ablation, alpha fixed uniform and no switching networks.
    bool switching = true;
    // Adds transition noise to the per-base predictive covariance of the
    // prediction loss (off: A Sigma A^T only).
    bool pred_trans_noise = false;
    double init_offdiag_scale = 0.05;
    double init_trans_noise = 0.1;

    std::size_t switch_dim() const { return s_dim == 0 ? K : s_dim; }
    void validate() const;
};

std::string to_string(InputKind k);
std::string to_string(Activation a);

// Decoded observation distribution: Gaussian (mean, var) for real-valued
// observations, per-pixel Bernoulli probabilities (mean, empty var) for images.
struct Emission {
    InputKind kind = InputKind::real;
    std::vector<double> mean;
    std::vector<double> var;

    double log_likelihood(std::span<const double> x) const;
};

struct SwitchMemory {
    std::vector<double> h;
};

struct FilterState {
    FactoredGaussianState z_post;
    SwitchMemory memory;
    std::vector<double> s_prev_sample;
    std::size_t t = 0;
};

struct StepDiagnostics {
    std::vector<double> alpha;
    DiagGaussian s_prior;
    DiagGaussian s_post;
    std::vector<double> s_sample;
    FactoredGaussianState z_prior;
    FactoredGaussianState z_post;
    std::vector<double> z_sample;
    DiagGaussian w;
    Emission recon;
    bool repaired = false;
};

struct Rollout {
    // [sample][step]
    std::vector<std::vector<Emission>> emissions;
    std::vector<std::vector<std::vector<double>>> alphas;
    std::vector<std::vector<std::size_t>> modes;
};

// Argmax with ties broken by lowest index.
std::size_t argmax_mode(std::span<const double> alpha);

// Standard-normal draws consumed by one filtering step.
struct StepNoise {
    std::vector<double> s;     // switch_dim
    std::vector<double> z;     // 2m
    std::vector<double> pred;  // K x 2m, prediction-loss samples
};

// Tape-resident filter state; Vars belong to one Tape.
struct GraphState {
    ad::Var z_post;  // packed 5m
    ad::Var h;
    ad::Var s_prev;
};

struct GraphStep {
    ad::Var w_mean, w_var;
    ad::Var h;
    ad::Var s_prior_mean, s_prior_var;
    ad::Var s_post_mean, s_post_var;
    ad::Var s_sample;
    ad::Var alpha;
    ad::Var log_alpha;
    ad::Var z_prior, z_post;
    ad::Var z_sample;
    ad::Var dec_mean, dec_var;  // dec_var unused for images
    bool switching = true;
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);
    Model(ModelConfig cfg, ParamStore params);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t parameter_count() const { return params_.total_count(); }

    // Sets every weight and bias of one network ("encoder", "decoder",
    // "f_trans", "f_inf", "gru") to zero.
    void zero_network(const std::string& prefix);
    // Base matrices plus the activated transition noise.
    TransitionBank bank() const;

    // Plain evaluation of the individual pieces.
    DiagGaussian encode(std::span<const double> x) const;
    std::pair<DiagGaussian, SwitchMemory> switch_prior(const SwitchMemory& memory,
                                                       std::span<const double> s_prev,
                                                       std::span<const double> z_prev_mean) const;
    DiagGaussian switch_posterior(const SwitchMemory& memory, const DiagGaussian& w) const;
    Emission decode(std::span<const double> z) const;
    std::vector<double> alpha_from_switch(std::span<const double> s) const;

    FilterState initial_state() const;
    std::pair<FilterState, StepDiagnostics> filter_step(const FilterState& state,
                                                        std::span<const double> x,
                                                        std::span<const double> noise_s,
                                                        std::span<const double> noise_z) const;
    // Filters every step of one sequence; mean mode uses zero noise.
    std::pair<FilterState, std::vector<StepDiagnostics>> filter(
        std::span<const double> xs, std::size_t steps, bool sample, std::uint64_t seed) const;

    // One generative step without an observation: switch prior, blend,
    // predict, sample z, decode. Consumes switch_dim + 2m normals.
    std::pair<FilterState, Emission> predictive_step(const FilterState& state,
                                                     std::span<const double> noise_s,
                                                     std::span<const double> noise_z,
                                                     std::vector<double>* alpha_out = nullptr) const;

    Rollout rollout(const FilterState& state, std::size_t horizon, std::size_t samples,
                    std::uint64_t seed) const;

    // Graph construction used by training, metrics and the plain wrappers.
    GraphState graph_initial(ad::Tape& tape) const;
    GraphState graph_from(ad::Tape& tape, const FilterState& s) const;
    void graph_encode(ad::Tape& tape, ad::Var x, ad::Var& mean, ad::Var& var) const;
    ad::Var graph_gru(ad::Tape& tape, ad::Var h, ad::Var s_prev) const;
    void graph_switch_prior(ad::Tape& tape, ad::Var h, ad::Var z_prev_mean, ad::Var& mean,
                            ad::Var& var) const;
    void graph_switch_posterior(ad::Tape& tape, ad::Var h, ad::Var w_mean, ad::Var w_var,
                                ad::Var& mean, ad::Var& var) const;
    // Switching sample -> (alpha, log alpha).
    void graph_alpha(ad::Tape& tape, ad::Var s, ad::Var& alpha, ad::Var& log_alpha) const;
    ad::Var graph_trans_noise(ad::Tape& tape) const;
    ad::Var graph_bank(ad::Tape& tape) const;
    void graph_decode(ad::Tape& tape, ad::Var z, ad::Var& mean, ad::Var& var) const;
    ad::Var graph_log_likelihood(std::span<const double> x, ad::Var mean, ad::Var var) const;
    GraphStep graph_filter_step(ad::Tape& tape, const GraphState& state, std::span<const double> x,
                                std::span<const double> noise_s, std::span<const double> noise_z) const;
    GraphState graph_next(const GraphStep& step) const;

    FilterState extract_state(const GraphStep& step, std::size_t t) const;
    StepDiagnostics extract_diagnostics(const GraphStep& step) const;

private:
    struct Net {
        std::vector<std::size_t> w, b;
    };

    void build(std::uint64_t seed);
    void index_params();
    Net add_mlp(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                std::size_t out, std::uint64_t seed);
    Net find_mlp(const std::string& prefix, std::size_t layers) const;
    ad::Var mlp(ad::Tape& tape, const Net& net, ad::Var x) const;

    ModelConfig cfg_;
    ParamStore params_;
    Net enc_, dec_, trans_, inf_;
    std::size_t gru_w_rz_ = 0, gru_b_rz_ = 0, gru_w_in_ = 0, gru_b_in_ = 0, gru_w_hn_ = 0,
                gru_b_hn_ = 0;
    std::size_t proj_w_ = 0, proj_b_ = 0;
    std::size_t bank_ = 0, noise_raw_ = 0;
};

// splitmix64 step; derives independent stream seeds from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

}  // namespace srkn
