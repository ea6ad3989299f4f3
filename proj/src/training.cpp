#include "srkn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binio.hpp"
#include "srkn/ad_ops.hpp"
#include "srkn/config.hpp"
#include "srkn/errors.hpp"

namespace srkn {

using ad::Tape;
using ad::Var;

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    recon += o.recon;
    kl_z += o.kl_z;
    kl_s += o.kl_s;
    pred += o.pred;
    objective += o.objective;
    return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
    recon *= s;
    kl_z *= s;
    kl_s *= s;
    pred *= s;
    objective *= s;
    return *this;
}

void TrainConfig::validate() const {
    require(lr > 0.0, "train.lr must be positive");
    require(batch_size >= 1, "train.batch_size must be >= 1");
    require(samples >= 1, "train.samples must be >= 1");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam decay rates must lie in [0, 1)");
    require(adam_eps > 0.0, "Adam epsilon must be positive");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

NoiseSource::NoiseSource(const ModelConfig& cfg, std::uint64_t seed)
    : s_dim_(cfg.switching ? cfg.switch_dim() : 0), z_dim_(2 * cfg.m), K_(cfg.K), rng_(seed) {}

StepNoise NoiseSource::next() {
    StepNoise n;
    n.s.resize(s_dim_);
    n.z.resize(z_dim_);
    n.pred.resize(K_ * z_dim_);
    for (double& v : n.s) v = nd_(rng_);
    for (double& v : n.z) v = nd_(rng_);
    for (double& v : n.pred) v = nd_(rng_);
    return n;
}

std::uint64_t sequence_seed(std::uint64_t root, std::uint64_t pass, std::uint64_t index) {
    return derive_seed(derive_seed(root, pass), index);
}

namespace {

std::string describe(double recon, double kl_z, double kl_s, double pred) {
    std::ostringstream os;
    os << "recon=" << recon << " kl_z=" << kl_z << " kl_s=" << kl_s << " pred=" << pred;
    return os.str();
}

}  // namespace

SequenceGraph build_sequence_graph(const Model& model, Tape& tape, std::span<const double> xs,
                                   std::size_t steps, NoiseSource& noise, const LossScales& scales) {
    const ModelConfig& cfg = model.config();
    const std::size_t D = cfg.obs_dim, m = cfg.m, K = cfg.K;
    require(steps >= 1, "sequence must have at least one step");
    require(xs.size() >= steps * D, "sequence is shorter than the requested number of steps");

    SequenceGraph g;
    std::vector<Var> recon, kl_z, kl_s, pred;
    GraphState state = model.graph_initial(tape);
    const Var bank = model.graph_bank(tape);
    const Var trans_noise = model.graph_trans_noise(tape);
    g.steps.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const StepNoise n = noise.next();
        const auto x = xs.subspan(t * D, D);
        GraphStep st;
        try {
            st = model.graph_filter_step(tape, state, x, n.s, n.z);
        } catch (const NumericError& err) {
            throw NumericError("step " + std::to_string(t) + ": " + err.what());
        }

        Var rec = model.graph_log_likelihood(x, st.dec_mean, st.dec_var);
        Var klz = ad::kl_factored(st.z_post, st.z_prior);
        Var kls = st.switching ? ad::kl_diag(st.s_post_mean, st.s_post_var, st.s_prior_mean, st.s_prior_var)
                               : tape.constant(std::vector<double>{0.0});

        // Mixture over base systems of the predictive likelihood from the
        // previous posterior; the latent draw for system k uses pred[k].
        std::vector<Var> per_k;
        per_k.reserve(K);
        for (std::size_t k = 0; k < K; ++k) {
            Var Ak = ad::bank_row(bank, k, m);
            Var prior_k = cfg.pred_trans_noise ? ad::predict(state.z_post, Ak, trans_noise)
                                               : ad::predict(state.z_post, Ak);
            Var zk = ad::sample_factored(prior_k, std::span<const double>(n.pred).subspan(k * 2 * m, 2 * m));
            Var mean, var;
            model.graph_decode(tape, zk, mean, var);
            per_k.push_back(model.graph_log_likelihood(x, mean, var));
        }
        Var prd = ad::log_sum_exp(st.log_alpha + ad::concat(per_k));

        const double vr = rec.scalar(), vz = klz.scalar(), vs = kls.scalar(), vp = prd.scalar();
        if (!std::isfinite(vr) || !std::isfinite(vz) || !std::isfinite(vs) || !std::isfinite(vp))
            throw NumericError("non-finite loss at step " + std::to_string(t) + ": " + describe(vr, vz, vs, vp));

        recon.push_back(rec);
        kl_z.push_back(klz);
        kl_s.push_back(kls);
        pred.push_back(prd);
        state = model.graph_next(st);
        g.steps.push_back(std::move(st));
    }
    g.recon = ad::sum_all(recon);
    g.kl_z = ad::sum_all(kl_z);
    g.kl_s = ad::sum_all(kl_s);
    g.pred = ad::sum_all(pred);
    std::vector<Var> terms{ad::scale(g.recon, scales.rec), ad::scale(g.kl_z, -scales.z),
                           ad::scale(g.kl_s, -scales.s), ad::scale(g.pred, scales.pred)};
    g.objective = ad::sum_all(terms);
    return g;
}

namespace {

LossBreakdown breakdown(const SequenceGraph& g) {
    return {g.recon.scalar(), g.kl_z.scalar(), g.kl_s.scalar(), g.pred.scalar(), g.objective.scalar()};
}

}  // namespace

LossBreakdown sequence_loss(const Model& model, std::span<const double> xs, std::size_t steps,
                            std::uint64_t seed, const LossScales& scales) {
    Tape tape(&model.params(), false);
    NoiseSource noise(model.config(), seed);
    return breakdown(build_sequence_graph(model, tape, xs, steps, noise, scales));
}

LossBreakdown sequence_loss(const Model& model, const SequenceBatch& batch, std::uint64_t seed) {
    return sequence_loss(model, batch, seed, LossScales::from(model.config()));
}

LossBreakdown sequence_loss(const Model& model, const SequenceBatch& batch, std::uint64_t seed,
                            const LossScales& scales) {
    require(batch.B >= 1, "sequence_loss: empty batch");
    require(batch.D == model.config().obs_dim, "sequence_loss: batch dimension does not match the model");
    LossBreakdown total;
    for (std::size_t b = 0; b < batch.B; ++b) {
        const auto xs = batch.sequence(b);
        total += sequence_loss(model, xs, batch.length(b), sequence_seed(seed, 0, b), scales);
    }
    total *= 1.0 / static_cast<double>(batch.B);
    return total;
}

LossBreakdown accumulate_gradient(const Model& model, std::span<const double> xs, std::size_t steps,
                                  std::uint64_t seed, const LossScales& scales, double weight,
                                  Gradients& grads) {
    Tape tape(&model.params(), true);
    NoiseSource noise(model.config(), seed);
    SequenceGraph g = build_sequence_graph(model, tape, xs, steps, noise, scales);
    tape.backward(g.objective, weight);
    tape.accumulate_param_grads(grads);
    return breakdown(g);
}

double pred_loss(const Model& model, std::span<const double> xs, std::size_t steps,
                 const std::vector<StepDiagnostics>& diagnostics,
                 const std::vector<std::vector<double>>& pred_noise) {
    const ModelConfig& cfg = model.config();
    const std::size_t D = cfg.obs_dim, m = cfg.m, K = cfg.K;
    require(diagnostics.size() >= steps && pred_noise.size() >= steps, "pred_loss: missing steps");
    const TransitionBank bank = model.bank();
    std::vector<double> empty;
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const FactoredGaussianState prev =
            t == 0 ? FactoredGaussianState::initial(m) : diagnostics[t - 1].z_post;
        require(pred_noise[t].size() == K * 2 * m, "pred_loss: noise must have K x 2m entries");
        std::vector<double> terms(K);
        for (std::size_t k = 0; k < K; ++k) {
            const auto A = bank.base(k);
            const auto prior = predict_state(prev, A, cfg.pred_trans_noise ? std::span<const double>(bank.trans_noise)
                                                                          : std::span<const double>(empty));
            const auto z = sample_factored(prior.state, std::span<const double>(pred_noise[t]).subspan(k * 2 * m, 2 * m));
            terms[k] = std::log(diagnostics[t].alpha[k]) + model.decode(z).log_likelihood(xs.subspan(t * D, D));
        }
        total += log_sum_exp(terms);
    }
    return total;
}

// ---------------------------------------------------------------- optimizer

Optimizer::Optimizer(const ParamStore& params, const TrainConfig& cfg)
    : cfg_(cfg), m_(zero_gradients(params)), v_(zero_gradients(params)) {
    cfg_.validate();
}

void Optimizer::restore(std::uint64_t t, Gradients m, Gradients v) {
    require(m.size() == m_.size() && v.size() == v_.size(), "optimizer state does not match the parameters");
    for (std::size_t i = 0; i < m.size(); ++i)
        require(m[i].size() == m_[i].size() && v[i].size() == v_[i].size(),
                "optimizer state does not match the parameters");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

void Optimizer::step(ParamStore& params, const Gradients& grad) {
    require(grad.size() == params.size(), "optimizer: gradient does not match the parameters");
    ++t_;
    if (cfg_.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < grad[i].size(); ++j) params[i].data[j] -= cfg_.lr * grad[i][j];
        return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].data;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grad[i][j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.adam_eps);
        }
    }
}

// ---------------------------------------------------------------- history

std::string History::to_table() const {
    std::ostringstream os;
    os.precision(10);
    os << "epoch\trecon\tkl_z\tkl_s\tpred\tobjective\tval_recon\tval_kl_z\tval_kl_s\tval_pred\tval_objective\tgrad_norm\n";
    for (const auto& e : epochs) {
        os << e.epoch << '\t' << e.train.recon << '\t' << e.train.kl_z << '\t' << e.train.kl_s << '\t'
           << e.train.pred << '\t' << e.train.objective;
        if (e.has_val)
            os << '\t' << e.val.recon << '\t' << e.val.kl_z << '\t' << e.val.kl_s << '\t' << e.val.pred << '\t'
               << e.val.objective;
        else
            os << "\tnan\tnan\tnan\tnan\tnan";
        os << '\t' << e.grad_norm << '\n';
    }
    return os.str();
}

void History::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << to_table();
}

// ---------------------------------------------------------------- fit

History fit(Model& model, Optimizer& opt, const SequenceBatch& train, const SequenceBatch* val,
            const TrainConfig& cfg, std::size_t start_epoch, const FitHooks& hooks) {
    cfg.validate();
    require(train.B >= 1, "fit: empty training set");
    require(train.D == model.config().obs_dim, "fit: training data dimension does not match the model");
    require(!val || val->D == model.config().obs_dim, "fit: validation data dimension does not match the model");
    const LossScales base = LossScales::from(model.config());
    const std::uint64_t val_seed = derive_seed(cfg.seed, 0x76616c);

    // Contiguous copies of every training sequence.
    std::vector<std::vector<double>> seqs(train.B);
    std::vector<std::size_t> lens(train.B);
    for (std::size_t b = 0; b < train.B; ++b) {
        seqs[b] = train.sequence(b);
        lens[b] = train.length(b);
    }

    History hist;
    for (std::size_t e = start_epoch; e < start_epoch + cfg.epochs; ++e) {
        LossScales scales = base;
        if (cfg.anneal_epochs > 0) {
            const double a = std::min(1.0, static_cast<double>(e + 1) / static_cast<double>(cfg.anneal_epochs));
            scales.z *= a;
            scales.s *= a;
        }
        const ParamStore snapshot = model.params();
        const Optimizer opt_snapshot = opt;

        std::vector<std::size_t> order(train.B);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2 * e + 1));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochRecord rec;
        rec.epoch = e + 1;
        double norm_sum = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                const double weight = -1.0 / static_cast<double>((end - start) * cfg.samples);
                Gradients grads = zero_gradients(model.params());
                for (std::size_t j = start; j < end; ++j) {
                    const std::size_t b = order[j];
                    const std::uint64_t seed = sequence_seed(cfg.seed, e + 1, b);
                    for (std::size_t s = 0; s < cfg.samples; ++s) {
                        LossBreakdown l = accumulate_gradient(model, seqs[b], lens[b],
                                                              cfg.samples == 1 ? seed : derive_seed(seed, s),
                                                              scales, weight, grads);
                        l *= 1.0 / static_cast<double>(cfg.samples);
                        rec.train += l;
                    }
                }
                const double norm = global_norm(grads);
                if (!std::isfinite(norm))
                    throw NumericError("non-finite gradient in epoch " + std::to_string(e + 1));
                norm_sum += norm;
                ++batches;
                if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) scale(grads, cfg.clip_norm / norm);
                opt.step(model.params(), grads);
            }
            rec.train *= 1.0 / static_cast<double>(train.B);
            rec.grad_norm = batches ? norm_sum / static_cast<double>(batches) : 0.0;
            if (val && val->B > 0) {
                rec.val = sequence_loss(model, *val, val_seed, scales);
                rec.has_val = true;
            }
            if (!std::isfinite(rec.train.objective) || (rec.has_val && !std::isfinite(rec.val.objective)))
                throw NumericError("non-finite objective in epoch " + std::to_string(e + 1));
        } catch (const NumericError& err) {
            model.params() = snapshot;
            opt = opt_snapshot;
            hist.diverged = true;
            hist.message = std::string(err.what()) + "; parameters restored to the end of epoch " + std::to_string(e);
            break;
        }
        hist.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec, model, opt);
    }
    return hist;
}

// ---------------------------------------------------------------- grad check

GradCheckReport grad_check(const Model& model, std::span<const double> xs, std::size_t steps,
                           std::uint64_t seed, double eps) {
    require(eps > 0.0, "grad_check: eps must be positive");
    const LossScales scales = LossScales::from(model.config());
    Gradients analytic = zero_gradients(model.params());
    accumulate_gradient(model, xs, steps, seed, scales, 1.0, analytic);

    Model probe = model;
    GradCheckReport report;
    for (std::size_t i = 0; i < probe.params().size(); ++i) {
        auto& data = probe.params()[i].data;
        double diff2 = 0.0, num2 = 0.0, ana2 = 0.0;
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double orig = data[j];
            data[j] = orig + eps;
            const double up = sequence_loss(probe, xs, steps, seed, scales).objective;
            data[j] = orig - eps;
            const double down = sequence_loss(probe, xs, steps, seed, scales).objective;
            data[j] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[i][j];
            diff2 += (numeric - a) * (numeric - a);
            num2 += numeric * numeric;
            ana2 += a * a;
        }
        const double denom = std::max(std::sqrt(num2) + std::sqrt(ana2), 1e-12);
        GradCheckGroup g{probe.params()[i].name, data.size(), std::sqrt(diff2) / denom};
        if (g.rel_error >= report.worst) {
            report.worst = g.rel_error;
            report.worst_group = g.name;
        }
        report.groups.push_back(std::move(g));
    }
    return report;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kCkptMagic[9] = "SRKNCKPT";
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    Config cfg = Config::defaults();
    if (!ck.config_text.empty()) cfg.merge(Config::parse(ck.config_text, "checkpoint"));
    store_model_config(cfg, ck.model_config);

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + tmp + "'");
        binio::put_magic(os, kCkptMagic);
        binio::put<std::uint32_t>(os, kCkptVersion);
        binio::put_string(os, cfg.to_text());
        binio::put<std::uint64_t>(os, ck.epoch);
        binio::put<std::uint64_t>(os, ck.params.size());
        for (const auto& t : ck.params) {
            binio::put_string(os, t.name);
            binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
            for (auto d : t.shape) binio::put<std::uint64_t>(os, d);
            binio::put_doubles(os, t.data);
        }
        binio::put<std::uint8_t>(os, ck.has_optimizer ? 1 : 0);
        if (ck.has_optimizer) {
            binio::put<std::uint64_t>(os, ck.opt_steps);
            for (const auto& v : ck.opt_m) binio::put_doubles(os, v);
            for (const auto& v : ck.opt_v) binio::put_doubles(os, v);
        }
        if (!os) throw IoError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
    binio::expect_magic(is, kCkptMagic, "checkpoint");
    const auto version = binio::get<std::uint32_t>(is);
    if (version != kCkptVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_text = binio::get_string(is);
    Config cfg = Config::defaults();
    cfg.merge(Config::parse(ck.config_text, path.string()));
    ck.model_config = model_config_from(cfg);
    ck.epoch = binio::get<std::uint64_t>(is);
    const auto count = binio::get<std::uint64_t>(is);
    if (count > 100000) throw IoError("corrupt checkpoint");
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = binio::get_string(is, 4096);
        const auto rank = binio::get<std::uint32_t>(is);
        if (rank > 8) throw IoError("corrupt checkpoint");
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = binio::get<std::uint64_t>(is);
            n *= d;
        }
        if (n > (std::size_t{1} << 32)) throw IoError("corrupt checkpoint");
        std::vector<double> data(n);
        binio::get_doubles(is, data);
        ck.params.add(std::move(name), std::move(shape), std::move(data));
    }
    ck.has_optimizer = binio::get<std::uint8_t>(is) != 0;
    if (ck.has_optimizer) {
        ck.opt_steps = binio::get<std::uint64_t>(is);
        ck.opt_m = zero_gradients(ck.params);
        ck.opt_v = zero_gradients(ck.params);
        for (auto& v : ck.opt_m) binio::get_doubles(is, v);
        for (auto& v : ck.opt_v) binio::get_doubles(is, v);
    }
    return ck;
}

}  // namespace srkn
