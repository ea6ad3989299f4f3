#pragma once

// Beta-scaled ELBO with the mixture prediction loss, its gradients, the
// optimizer loop and checkpoint files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "srkn/datasets.hpp"
#include "srkn/model.hpp"
#include "srkn/params.hpp"

namespace srkn {

struct LossBreakdown {
    double recon = 0.0;
    double kl_z = 0.0;
    double kl_s = 0.0;
    double pred = 0.0;
    double objective = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
    LossBreakdown& operator*=(double s);
};

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double clip_norm = 5.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    // Linear warm-up of the two KL scales over this many epochs (0: constant).
    std::size_t anneal_epochs = 0;
    // Independent single-sample passes averaged per sequence.
    std::size_t samples = 1;

    void validate() const;
};

std::string to_string(OptimizerKind k);

// Loss scales applied to the four terms.
struct LossScales {
    double rec = 1.0, z = 0.1, s = 0.1, pred = 1.0;

    static LossScales from(const ModelConfig& c) { return {c.beta_rec, c.beta_z, c.beta_s, c.beta_pred}; }
    double combine(const LossBreakdown& l) const { return rec * l.recon - z * l.kl_z - s * l.kl_s + pred * l.pred; }
};

// Standard-normal draws in a fixed per-step order: switching sample, latent
// sample, then K latent samples for the prediction loss.
class NoiseSource {
public:
    NoiseSource(const ModelConfig& cfg, std::uint64_t seed);
    StepNoise next();

private:
    std::size_t s_dim_, z_dim_, K_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> nd_;
};

// Seed of the noise stream for sequence `index` in pass `pass`.
std::uint64_t sequence_seed(std::uint64_t root, std::uint64_t pass, std::uint64_t index);

// One sequence on a tape. `objective` is the scalar to maximize.
struct SequenceGraph {
    ad::Var recon, kl_z, kl_s, pred, objective;
    std::vector<GraphStep> steps;
};

// Builds the single-sample objective of one sequence. Non-finite terms raise
// NumericError naming the step.
SequenceGraph build_sequence_graph(const Model& model, ad::Tape& tape, std::span<const double> xs,
                                   std::size_t steps, NoiseSource& noise, const LossScales& scales);

// Loss of one sequence (sums over its valid steps).
LossBreakdown sequence_loss(const Model& model, std::span<const double> xs, std::size_t steps,
                            std::uint64_t seed, const LossScales& scales);
// Mean over the sequences of a batch; sequence b uses sequence_seed(seed, 0, b).
LossBreakdown sequence_loss(const Model& model, const SequenceBatch& batch, std::uint64_t seed);
LossBreakdown sequence_loss(const Model& model, const SequenceBatch& batch, std::uint64_t seed,
                            const LossScales& scales);

// Objective and its gradient for one sequence, accumulated into `grads` with
// weight `weight` (gradient of weight * objective).
LossBreakdown accumulate_gradient(const Model& model, std::span<const double> xs, std::size_t steps,
                                  std::uint64_t seed, const LossScales& scales, double weight,
                                  Gradients& grads);

// Mixture prediction loss recomputed from a finished filtering pass:
// sum_t log sum_k alpha_t^k p^k(x_t | z_{t-1}), one latent draw per base
// system from pred_noise[t] (K x 2m).
double pred_loss(const Model& model, std::span<const double> xs, std::size_t steps,
                 const std::vector<StepDiagnostics>& diagnostics,
                 const std::vector<std::vector<double>>& pred_noise);

class Optimizer {
public:
    Optimizer(const ParamStore& params, const TrainConfig& cfg);
    // Descends along `grad` (gradient of the quantity to minimize).
    void step(ParamStore& params, const Gradients& grad);

    std::uint64_t steps() const { return t_; }
    const Gradients& first_moment() const { return m_; }
    const Gradients& second_moment() const { return v_; }
    void restore(std::uint64_t t, Gradients m, Gradients v);

private:
    TrainConfig cfg_;
    std::uint64_t t_ = 0;
    Gradients m_, v_;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    LossBreakdown train;
    LossBreakdown val;
    bool has_val = false;
    double grad_norm = 0.0;  // mean pre-clip norm over the epoch
};

struct History {
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    std::string message;

    std::string to_table() const;
    void save(const std::filesystem::path& path) const;
};

struct FitHooks {
    // Called after each completed epoch with the model and optimizer state.
    std::function<void(const EpochRecord&, const Model&, const Optimizer&)> on_epoch;
};

// Minibatch gradient ascent on the objective. Starts after `start_epoch`
// completed epochs (for resume); on a non-finite objective the parameters of
// the last completed epoch are restored and `diverged` is set.
History fit(Model& model, Optimizer& opt, const SequenceBatch& train, const SequenceBatch* val,
            const TrainConfig& cfg, std::size_t start_epoch = 0, const FitHooks& hooks = {});

struct GradCheckGroup {
    std::string name;
    std::size_t size = 0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double worst = 0.0;
    std::string worst_group;
};

// Central differences of the single-sample objective at a fixed noise stream
// against the tape gradient, per parameter tensor. The group error is
// ||numeric - analytic|| / max(||numeric|| + ||analytic||, 1e-12).
GradCheckReport grad_check(const Model& model, std::span<const double> xs, std::size_t steps,
                           std::uint64_t seed, double eps = 1e-5);

struct Checkpoint {
    std::string config_text;  // resolved run configuration
    ModelConfig model_config;
    ParamStore params;
    std::size_t epoch = 0;
    bool has_optimizer = false;
    std::uint64_t opt_steps = 0;
    Gradients opt_m, opt_v;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace srkn
