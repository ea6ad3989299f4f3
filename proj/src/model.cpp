#include "srkn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "srkn/ad_ops.hpp"
#include "srkn/errors.hpp"

namespace srkn {

using ad::Tape;
using ad::Var;

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void ModelConfig::validate() const {
    require(m >= 1, "model.m must be >= 1");
    require(K >= 1, "model.K must be >= 1");
    require(obs_dim >= 1, "model.obs_dim must be >= 1");
    require(!switching || gru_hidden >= 1, "model.gru_hidden must be >= 1");
    require(beta_rec >= 0 && beta_z >= 0 && beta_s >= 0 && beta_pred >= 0,
            "loss scales must be non-negative");
    require(bandwidth == 0,
            "model.bandwidth > 0 is not supported: banded base matrices break the three-vector "
            "covariance structure");
    require(init_trans_noise > kVarianceFloor, "model.init_trans_noise must exceed the variance floor");
}

std::string to_string(InputKind k) { return k == InputKind::real ? "real" : "image"; }
std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

double Emission::log_likelihood(std::span<const double> x) const {
    if (kind == InputKind::image) return bernoulli_log_pmf(x, mean);
    return diag_gauss_log_pdf(x, mean, var);
}

std::size_t argmax_mode(std::span<const double> alpha) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < alpha.size(); ++k)
        if (alpha[k] > alpha[best]) best = k;
    return best;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build(seed);
    index_params();
}

Model::Model(ModelConfig cfg, ParamStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    // Shapes must match a freshly built model exactly.
    Model reference(cfg_, 0);
    require(reference.params_.size() == params_.size(),
            "parameter set does not match the model configuration");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        require(reference.params_[i].name == params_[i].name &&
                    reference.params_[i].shape == params_[i].shape,
                "parameter '" + params_[i].name + "' does not match the model configuration");
    }
    index_params();
}

Model::Net Model::add_mlp(const std::string& prefix, std::size_t in,
                          const std::vector<std::size_t>& hidden, std::size_t out,
                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Net net;
    std::size_t prev = in;
    for (std::size_t l = 0; l <= hidden.size(); ++l) {
        const std::size_t width = l < hidden.size() ? hidden[l] : out;
        const double limit = std::sqrt(6.0 / static_cast<double>(prev + width));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> w(width * prev);
        for (double& v : w) v = dist(rng);
        net.w.push_back(params_.add(prefix + ".w" + std::to_string(l), {width, prev}, std::move(w)));
        net.b.push_back(params_.add(prefix + ".b" + std::to_string(l), {width},
                                    std::vector<double>(width, 0.0)));
        prev = width;
    }
    return net;
}

Model::Net Model::find_mlp(const std::string& prefix, std::size_t layers) const {
    Net net;
    for (std::size_t l = 0; l < layers; ++l) {
        net.w.push_back(params_.index(prefix + ".w" + std::to_string(l)));
        net.b.push_back(params_.index(prefix + ".b" + std::to_string(l)));
    }
    return net;
}

void Model::build(std::uint64_t seed) {
    const std::size_t m = cfg_.m, K = cfg_.K, S = cfg_.switch_dim(), H = cfg_.gru_hidden;
    const std::size_t D = cfg_.obs_dim;
    add_mlp("encoder", D, cfg_.encoder_hidden, 2 * m, derive_seed(seed, 1));
    const std::size_t dec_out = cfg_.input_kind == InputKind::real ? 2 * D : D;
    Net dec = add_mlp("decoder", 2 * m, cfg_.decoder_hidden, dec_out, derive_seed(seed, 2));
    if (cfg_.input_kind == InputKind::image) {
        // Start near the mean pixel density of sparse frames.
        auto& b = params_[dec.b.back()].data;
        std::fill(b.begin(), b.end(), -4.0);
    }

    if (cfg_.switching) {
        std::mt19937_64 rng(derive_seed(seed, 3));
        const double lim_rz = std::sqrt(6.0 / static_cast<double>(S + H + 2 * H));
        const double lim_n = std::sqrt(6.0 / static_cast<double>(S + H));
        const double lim_h = std::sqrt(6.0 / static_cast<double>(2 * H));
        auto fill = [&rng](std::size_t n, double lim) {
            std::uniform_real_distribution<double> d(-lim, lim);
            std::vector<double> v(n);
            for (double& x : v) x = d(rng);
            return v;
        };
        params_.add("gru.w_rz", {2 * H, S + H}, fill(2 * H * (S + H), lim_rz));
        params_.add("gru.b_rz", {2 * H}, std::vector<double>(2 * H, 0.0));
        params_.add("gru.w_in", {H, S}, fill(H * S, lim_n));
        params_.add("gru.b_in", {H}, std::vector<double>(H, 0.0));
        params_.add("gru.w_hn", {H, H}, fill(H * H, lim_h));
        params_.add("gru.b_hn", {H}, std::vector<double>(H, 0.0));
        add_mlp("f_trans", H + 2 * m, cfg_.trans_hidden, 2 * S, derive_seed(seed, 4));
        add_mlp("f_inf", H + 2 * m, cfg_.inf_hidden, 2 * S, derive_seed(seed, 5));
        if (S != K) {
            const double lim = std::sqrt(6.0 / static_cast<double>(S + K));
            params_.add("switch_proj.w", {K, S}, fill(K * S, lim));
            params_.add("switch_proj.b", {K}, std::vector<double>(K, 0.0));
        }
    }

    std::mt19937_64 rng(derive_seed(seed, 6));
    std::normal_distribution<double> nd(0.0, cfg_.init_offdiag_scale);
    std::vector<double> blocks(K * 4 * m);
    for (std::size_t k = 0; k < K; ++k) {
        double* row = blocks.data() + k * 4 * m;
        for (std::size_t i = 0; i < m; ++i) {
            row[i] = 1.0;
            row[m + i] = nd(rng);
            row[2 * m + i] = nd(rng);
            row[3 * m + i] = 1.0;
        }
    }
    params_.add("transition.blocks", {K, 4 * m}, std::move(blocks));
    params_.add("transition.noise_raw", {2 * m},
                std::vector<double>(2 * m, positive_floor_inverse(cfg_.init_trans_noise)));
}

void Model::index_params() {
    enc_ = find_mlp("encoder", cfg_.encoder_hidden.size() + 1);
    dec_ = find_mlp("decoder", cfg_.decoder_hidden.size() + 1);
    if (cfg_.switching) {
        trans_ = find_mlp("f_trans", cfg_.trans_hidden.size() + 1);
        inf_ = find_mlp("f_inf", cfg_.inf_hidden.size() + 1);
        gru_w_rz_ = params_.index("gru.w_rz");
        gru_b_rz_ = params_.index("gru.b_rz");
        gru_w_in_ = params_.index("gru.w_in");
        gru_b_in_ = params_.index("gru.b_in");
        gru_w_hn_ = params_.index("gru.w_hn");
        gru_b_hn_ = params_.index("gru.b_hn");
        if (cfg_.switch_dim() != cfg_.K) {
            proj_w_ = params_.index("switch_proj.w");
            proj_b_ = params_.index("switch_proj.b");
        }
    }
    bank_ = params_.index("transition.blocks");
    noise_raw_ = params_.index("transition.noise_raw");
}

void Model::zero_network(const std::string& prefix) {
    bool any = false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name.rfind(prefix + ".", 0) == 0) {
            std::fill(params_[i].data.begin(), params_[i].data.end(), 0.0);
            any = true;
        }
    }
    require(any, "no parameters under '" + prefix + "'");
}

TransitionBank Model::bank() const {
    TransitionBank b;
    b.K = cfg_.K;
    b.m = cfg_.m;
    b.blocks = params_[bank_].data;
    for (double raw : params_[noise_raw_].data) b.trans_noise.push_back(positive_floor(raw));
    return b;
}

Var Model::mlp(Tape& tape, const Net& net, Var x) const {
    Var h = x;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        h = ad::linear(tape.param(net.w[l]), tape.param(net.b[l]), h);
        if (l + 1 < net.w.size()) h = cfg_.activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
    }
    return h;
}

GraphState Model::graph_initial(Tape& tape) const { return graph_from(tape, initial_state()); }

GraphState Model::graph_from(Tape& tape, const FilterState& s) const {
    return {tape.constant(s.z_post.packed()), tape.constant(s.memory.h),
            tape.constant(s.s_prev_sample)};
}

void Model::graph_encode(Tape& tape, Var x, Var& mean, Var& var) const {
    require(x.size() == cfg_.obs_dim, "encode: observation has the wrong size");
    Var out = mlp(tape, enc_, x);
    mean = ad::slice(out, 0, cfg_.m);
    var = ad::positive(ad::slice(out, cfg_.m, cfg_.m));
}

Var Model::graph_gru(Tape& tape, Var h, Var s_prev) const {
    const std::size_t H = cfg_.gru_hidden;
    Var rz = ad::sigmoid(ad::linear(tape.param(gru_w_rz_), tape.param(gru_b_rz_), ad::concat({s_prev, h})));
    Var r = ad::slice(rz, 0, H);
    Var u = ad::slice(rz, H, H);
    Var hn = ad::linear(tape.param(gru_w_hn_), tape.param(gru_b_hn_), h);
    Var n = ad::tanh(ad::linear(tape.param(gru_w_in_), tape.param(gru_b_in_), s_prev) + r * hn);
    // h' = (1 - u) n + u h = n + u (h - n)
    return n + u * (h - n);
}

void Model::graph_switch_prior(Tape& tape, Var h, Var z_prev_mean, Var& mean, Var& var) const {
    const std::size_t S = cfg_.switch_dim();
    Var out = mlp(tape, trans_, ad::concat({h, z_prev_mean}));
    mean = ad::slice(out, 0, S);
    var = ad::positive(ad::slice(out, S, S));
}

void Model::graph_switch_posterior(Tape& tape, Var h, Var w_mean, Var w_var, Var& mean,
                                   Var& var) const {
    const std::size_t S = cfg_.switch_dim();
    Var out = mlp(tape, inf_, ad::concat({h, w_mean, w_var}));
    mean = ad::slice(out, 0, S);
    var = ad::positive(ad::slice(out, S, S));
}

void Model::graph_alpha(Tape& tape, Var s, Var& alpha, Var& log_alpha) const {
    Var logits = s;
    if (cfg_.switch_dim() != cfg_.K) logits = ad::linear(tape.param(proj_w_), tape.param(proj_b_), s);
    alpha = ad::softmax(logits);
    log_alpha = ad::log_softmax(logits);
}

Var Model::graph_trans_noise(Tape& tape) const { return ad::positive(tape.param(noise_raw_)); }

Var Model::graph_bank(Tape& tape) const { return tape.param(bank_); }

void Model::graph_decode(Tape& tape, Var z, Var& mean, Var& var) const {
    require(z.size() == 2 * cfg_.m, "decode: latent sample must have length 2m");
    Var out = mlp(tape, dec_, z);
    if (cfg_.input_kind == InputKind::image) {
        mean = ad::sigmoid(out);
        var = mean;
    } else {
        mean = ad::slice(out, 0, cfg_.obs_dim);
        var = ad::positive(ad::slice(out, cfg_.obs_dim, cfg_.obs_dim));
    }
}

Var Model::graph_log_likelihood(std::span<const double> x, Var mean, Var var) const {
    if (cfg_.input_kind == InputKind::image) return ad::bernoulli_log_pmf(x, mean);
    return ad::diag_log_pdf(x, mean, var);
}

GraphStep Model::graph_filter_step(Tape& tape, const GraphState& state, std::span<const double> x,
                                   std::span<const double> noise_s,
                                   std::span<const double> noise_z) const {
    const std::size_t m = cfg_.m, K = cfg_.K;
    require(noise_z.size() == 2 * m, "filter_step: z noise must have length 2m");
    GraphStep st;
    st.switching = cfg_.switching;
    graph_encode(tape, tape.constant(x), st.w_mean, st.w_var);
    if (cfg_.switching) {
        require(noise_s.size() == cfg_.switch_dim(), "filter_step: s noise has the wrong length");
        st.h = graph_gru(tape, state.h, state.s_prev);
        graph_switch_prior(tape, st.h, ad::slice(state.z_post, 0, 2 * m), st.s_prior_mean, st.s_prior_var);
        graph_switch_posterior(tape, st.h, st.w_mean, st.w_var, st.s_post_mean, st.s_post_var);
        st.s_sample = ad::reparam(st.s_post_mean, st.s_post_var, noise_s);
        graph_alpha(tape, st.s_sample, st.alpha, st.log_alpha);
    } else {
        st.h = state.h;
        st.s_sample = state.s_prev;
        st.alpha = tape.constant(std::vector<double>(K, 1.0 / static_cast<double>(K)));
        st.log_alpha = tape.constant(std::vector<double>(K, -std::log(static_cast<double>(K))));
    }
    Var A = ad::blend(st.alpha, graph_bank(tape));
    st.z_prior = ad::predict(state.z_post, A, graph_trans_noise(tape));
    st.z_post = ad::kalman_update(st.z_prior, st.w_mean, st.w_var);
    st.z_sample = ad::sample_factored(st.z_post, noise_z);
    graph_decode(tape, st.z_sample, st.dec_mean, st.dec_var);
    return st;
}

GraphState Model::graph_next(const GraphStep& step) const {
    return {step.z_post, step.h, step.s_sample};
}

FilterState Model::initial_state() const {
    FilterState s;
    s.z_post = FactoredGaussianState::initial(cfg_.m);
    if (cfg_.switching) {
        s.memory.h.assign(cfg_.gru_hidden, 0.0);
        s.s_prev_sample.assign(cfg_.switch_dim(), 0.0);
    }
    return s;
}

namespace {

std::vector<double> copy(Var v) { return {v.value().begin(), v.value().end()}; }

}  // namespace

FilterState Model::extract_state(const GraphStep& step, std::size_t t) const {
    FilterState s;
    s.z_post = FactoredGaussianState::unpack(step.z_post.value());
    s.memory.h = copy(step.h);
    s.s_prev_sample = copy(step.s_sample);
    s.t = t;
    return s;
}

StepDiagnostics Model::extract_diagnostics(const GraphStep& step) const {
    StepDiagnostics d;
    d.alpha = copy(step.alpha);
    if (step.switching) {
        d.s_prior = {copy(step.s_prior_mean), copy(step.s_prior_var)};
        d.s_post = {copy(step.s_post_mean), copy(step.s_post_var)};
    }
    d.s_sample = copy(step.s_sample);
    d.z_prior = FactoredGaussianState::unpack(step.z_prior.value());
    d.z_post = FactoredGaussianState::unpack(step.z_post.value());
    d.z_sample = copy(step.z_sample);
    d.w = {copy(step.w_mean), copy(step.w_var)};
    d.recon.kind = cfg_.input_kind;
    d.recon.mean = copy(step.dec_mean);
    if (cfg_.input_kind == InputKind::real) d.recon.var = copy(step.dec_var);
    d.repaired = step.z_prior.tape->repairs() > 0;
    return d;
}

DiagGaussian Model::encode(std::span<const double> x) const {
    Tape tape(&params_, false);
    Var mean, var;
    graph_encode(tape, tape.constant(x), mean, var);
    return {copy(mean), copy(var)};
}

std::pair<DiagGaussian, SwitchMemory> Model::switch_prior(const SwitchMemory& memory,
                                                          std::span<const double> s_prev,
                                                          std::span<const double> z_prev_mean) const {
    require(cfg_.switching, "switch_prior: switching is disabled in this model");
    require(memory.h.size() == cfg_.gru_hidden && s_prev.size() == cfg_.switch_dim() &&
                z_prev_mean.size() == 2 * cfg_.m,
            "switch_prior: dimension mismatch");
    Tape tape(&params_, false);
    Var h = graph_gru(tape, tape.constant(memory.h), tape.constant(s_prev));
    Var mean, var;
    graph_switch_prior(tape, h, tape.constant(z_prev_mean), mean, var);
    return {DiagGaussian{copy(mean), copy(var)}, SwitchMemory{copy(h)}};
}

DiagGaussian Model::switch_posterior(const SwitchMemory& memory, const DiagGaussian& w) const {
    require(cfg_.switching, "switch_posterior: switching is disabled in this model");
    require(memory.h.size() == cfg_.gru_hidden && w.dim() == cfg_.m,
            "switch_posterior: dimension mismatch");
    Tape tape(&params_, false);
    Var mean, var;
    graph_switch_posterior(tape, tape.constant(memory.h), tape.constant(w.mean),
                           tape.constant(w.var), mean, var);
    return {copy(mean), copy(var)};
}

Emission Model::decode(std::span<const double> z) const {
    Tape tape(&params_, false);
    Var mean, var;
    graph_decode(tape, tape.constant(z), mean, var);
    Emission e;
    e.kind = cfg_.input_kind;
    e.mean = copy(mean);
    if (cfg_.input_kind == InputKind::real) e.var = copy(var);
    return e;
}

std::vector<double> Model::alpha_from_switch(std::span<const double> s) const {
    if (!cfg_.switching) return std::vector<double>(cfg_.K, 1.0 / static_cast<double>(cfg_.K));
    Tape tape(&params_, false);
    Var alpha, log_alpha;
    graph_alpha(tape, tape.constant(s), alpha, log_alpha);
    return copy(alpha);
}

std::pair<FilterState, StepDiagnostics> Model::filter_step(const FilterState& state,
                                                           std::span<const double> x,
                                                           std::span<const double> noise_s,
                                                           std::span<const double> noise_z) const {
    Tape tape(&params_, false);
    GraphStep st = graph_filter_step(tape, graph_from(tape, state), x, noise_s, noise_z);
    return {extract_state(st, state.t + 1), extract_diagnostics(st)};
}

std::pair<FilterState, std::vector<StepDiagnostics>> Model::filter(std::span<const double> xs,
                                                                   std::size_t steps, bool sample,
                                                                   std::uint64_t seed) const {
    const std::size_t D = cfg_.obs_dim;
    require(xs.size() >= steps * D, "filter: not enough observations");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> ns(cfg_.switching ? cfg_.switch_dim() : 0), nz(2 * cfg_.m);
    FilterState state = initial_state();
    std::vector<StepDiagnostics> diags;
    diags.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        for (double& v : ns) v = sample ? nd(rng) : 0.0;
        for (double& v : nz) v = sample ? nd(rng) : 0.0;
        auto [next, d] = filter_step(state, xs.subspan(t * D, D), ns, nz);
        state = std::move(next);
        diags.push_back(std::move(d));
    }
    return {std::move(state), std::move(diags)};
}

std::pair<FilterState, Emission> Model::predictive_step(const FilterState& state,
                                                        std::span<const double> noise_s,
                                                        std::span<const double> noise_z,
                                                        std::vector<double>* alpha_out) const {
    const std::size_t m = cfg_.m, K = cfg_.K;
    Tape tape(&params_, false);
    GraphState gs = graph_from(tape, state);
    Var h = gs.h, s = gs.s_prev, alpha, log_alpha;
    if (cfg_.switching) {
        require(noise_s.size() == cfg_.switch_dim(), "predictive_step: s noise has the wrong length");
        h = graph_gru(tape, gs.h, gs.s_prev);
        Var mean, var;
        graph_switch_prior(tape, h, ad::slice(gs.z_post, 0, 2 * m), mean, var);
        s = ad::reparam(mean, var, noise_s);
        graph_alpha(tape, s, alpha, log_alpha);
    } else {
        alpha = tape.constant(std::vector<double>(K, 1.0 / static_cast<double>(K)));
    }
    Var A = ad::blend(alpha, graph_bank(tape));
    Var prior = ad::predict(gs.z_post, A, graph_trans_noise(tape));
    Var z = ad::sample_factored(prior, noise_z);
    Var dm, dv;
    graph_decode(tape, z, dm, dv);

    FilterState next;
    next.z_post = FactoredGaussianState::unpack(prior.value());
    next.memory.h = copy(h);
    next.s_prev_sample = copy(s);
    next.t = state.t + 1;
    Emission e;
    e.kind = cfg_.input_kind;
    e.mean = copy(dm);
    if (cfg_.input_kind == InputKind::real) e.var = copy(dv);
    if (alpha_out) *alpha_out = copy(alpha);
    return {std::move(next), std::move(e)};
}

Rollout Model::rollout(const FilterState& state, std::size_t horizon, std::size_t samples,
                       std::uint64_t seed) const {
    Rollout r;
    r.emissions.resize(samples);
    r.alphas.resize(samples);
    r.modes.resize(samples);
    if (horizon == 0) return r;
    std::vector<double> ns(cfg_.switching ? cfg_.switch_dim() : 0), nz(2 * cfg_.m);
    for (std::size_t i = 0; i < samples; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        std::normal_distribution<double> nd;
        FilterState s = state;
        for (std::size_t t = 0; t < horizon; ++t) {
            for (double& v : ns) v = nd(rng);
            for (double& v : nz) v = nd(rng);
            std::vector<double> alpha;
            auto [next, e] = predictive_step(s, ns, nz, &alpha);
            s = std::move(next);
            r.modes[i].push_back(argmax_mode(alpha));
            r.alphas[i].push_back(std::move(alpha));
            r.emissions[i].push_back(std::move(e));
        }
    }
    return r;
}

}  // namespace srkn
