#include "srkn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "srkn/errors.hpp"
#include "srkn/training.hpp"

namespace srkn {

namespace {

void check_batch(const Model& model, const SequenceBatch& batch) {
    require(batch.B >= 1, "metrics: empty batch");
    require(batch.D == model.config().obs_dim, "metrics: batch dimension " + std::to_string(batch.D) +
                                                    " does not match the model (" +
                                                    std::to_string(model.config().obs_dim) + ")");
}

}  // namespace

std::uint64_t sequence_stream(std::uint64_t seed, std::uint64_t pass, std::span<const double> xs) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::byte b : std::as_bytes(xs)) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return derive_seed(derive_seed(seed, pass), h);
}

double recon_ll(const Model& model, const SequenceBatch& batch, FilterMode mode, std::uint64_t seed) {
    check_batch(model, batch);
    const std::size_t D = batch.D;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.B; ++b) {
        const auto xs = batch.sequence(b);
        const std::size_t T = batch.length(b);
        require(T >= 1, "recon_ll: empty sequence");
        NoiseSource noise(model.config(), sequence_stream(seed, 0, xs));
        FilterState state = model.initial_state();
        double nll = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            StepNoise n = noise.next();
            if (mode == FilterMode::mean) {
                std::fill(n.s.begin(), n.s.end(), 0.0);
                std::fill(n.z.begin(), n.z.end(), 0.0);
            }
            const auto x = std::span<const double>(xs).subspan(t * D, D);
            auto [next, diag] = model.filter_step(state, x, n.s, n.z);
            nll -= diag.recon.log_likelihood(x);
            state = std::move(next);
        }
        total += nll / static_cast<double>(T);
    }
    return total / static_cast<double>(batch.B);
}

FilterState filter_prefix(const Model& model, std::span<const double> xs, std::size_t steps) {
    const std::size_t D = model.config().obs_dim;
    require(xs.size() >= steps * D, "filter_prefix: not enough observations");
    return model.filter(xs, steps, false, 0).first;
}

double predictive_log_density(const Model& model, const FilterState& state, std::span<const double> x,
                              std::size_t samples, std::uint64_t seed) {
    require(samples >= 1, "predictive density needs at least one sample");
    const Rollout r = model.rollout(state, 1, samples, seed);
    std::vector<double> lls(samples);
    for (std::size_t j = 0; j < samples; ++j) lls[j] = r.emissions[j][0].log_likelihood(x);
    return log_sum_exp(lls) - std::log(static_cast<double>(samples));
}

double one_step_loss(const Model& model, const SequenceBatch& batch, std::size_t switch_samples,
                     std::uint64_t seed) {
    check_batch(model, batch);
    const std::size_t D = batch.D;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.B; ++b) {
        const auto xs = batch.sequence(b);
        const std::size_t T = batch.length(b);
        require(T >= 2, "one_step_loss: sequences need at least two steps");
        const std::span<const double> all(xs);
        FilterState state = model.initial_state();
        std::vector<double> zero_s(model.config().switching ? model.config().switch_dim() : 0, 0.0);
        std::vector<double> zero_z(2 * model.config().m, 0.0);
        for (std::size_t t = 1; t < T; ++t) {
            state = model.filter_step(state, all.subspan((t - 1) * D, D), zero_s, zero_z).first;
            total -= predictive_log_density(model, state, all.subspan(t * D, D), switch_samples,
                                            sequence_stream(seed, t, xs));
        }
    }
    return total / static_cast<double>(batch.B);
}

double multi_step_loss(const Model& model, const SequenceBatch& batch, std::size_t prefix, std::size_t n,
                       std::uint64_t seed) {
    check_batch(model, batch);
    require(n >= 1, "multi_step_loss: n must be >= 1");
    require(prefix >= 1, "multi_step_loss: prefix must be >= 1");
    const std::size_t D = batch.D;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.B; ++b) {
        const auto xs = batch.sequence(b);
        const std::size_t T = batch.length(b);
        require(prefix < T, "multi_step_loss: prefix must be shorter than the sequence");
        const std::span<const double> all(xs);
        const FilterState state = filter_prefix(model, all, prefix);
        const Rollout r = model.rollout(state, T - prefix, n, sequence_stream(seed, prefix, xs));
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t h = 0; h < T - prefix; ++h)
                acc -= r.emissions[i][h].log_likelihood(all.subspan((prefix + h) * D, D));
        total += acc / static_cast<double>(n);
    }
    return total / static_cast<double>(batch.B);
}

std::vector<std::size_t> optimal_assignment(std::span<const double> cost, std::size_t n) {
    require(cost.size() == n * n, "optimal_assignment: cost matrix must be n x n");
    if (n == 0) return {};
    // Shortest augmenting path with potentials (1-based internal indexing).
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assign(n);
    for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
    return assign;
}

double wasserstein(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    require(a.size() == b.size(), "wasserstein: point sets must have equal size");
    require(!a.empty(), "wasserstein: empty point sets");
    const std::size_t n = a.size(), d = a[0].size();
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        require(a[i].size() == d && b[i].size() == d, "wasserstein: points must share one dimension");
        for (std::size_t j = 0; j < n; ++j) {
            double c = 0.0;
            for (std::size_t k = 0; k < d; ++k) c += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
            cost[i * n + j] = c;
        }
    }
    const auto assign = optimal_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assign[i]];
    return std::sqrt(total / static_cast<double>(n));
}

std::vector<std::size_t> similar_prefix_select(const SequenceBatch& batch, std::span<const double> anchor_prefix,
                                               std::size_t prefix, std::size_t n) {
    require(anchor_prefix.size() == prefix * batch.D, "similar_prefix_select: anchor prefix has the wrong size");
    require(n <= batch.B, "similar_prefix_select: n exceeds the number of sequences");
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(batch.B);
    for (std::size_t b = 0; b < batch.B; ++b) {
        if (batch.length(b) < prefix) continue;
        double d2 = 0.0;
        for (std::size_t t = 0; t < prefix; ++t) {
            const auto s = batch.step(t, b);
            for (std::size_t k = 0; k < batch.D; ++k) {
                const double diff = s[k] - anchor_prefix[t * batch.D + k];
                d2 += diff * diff;
            }
        }
        dist.emplace_back(d2, b);
    }
    require(n <= dist.size(), "similar_prefix_select: too few sequences cover the prefix");
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n), dist.end());
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = dist[i].second;
    return out;
}

double wasserstein_for_anchor(const Model& model, const SequenceBatch& batch, std::size_t anchor,
                              std::size_t prefix, std::size_t n, WassersteinMode mode, std::uint64_t seed) {
    check_batch(model, batch);
    require(anchor < batch.B, "wasserstein: anchor index out of range");
    const std::size_t D = batch.D, T = batch.length(anchor);
    require(prefix < T, "wasserstein: prefix must be shorter than the anchor sequence");
    const auto xs = batch.sequence(anchor);
    const std::span<const double> anchor_prefix(xs.data(), prefix * D);
    const auto truth_idx = similar_prefix_select(batch, anchor_prefix, prefix, n);

    const std::size_t first = mode == WassersteinMode::endpoint ? T - 1 : prefix;
    std::vector<std::vector<double>> truth, pred;
    for (std::size_t b : truth_idx) {
        require(batch.length(b) >= T, "wasserstein: selected sequence is shorter than the anchor");
        std::vector<double> v;
        for (std::size_t t = first; t < T; ++t) {
            const auto s = batch.step(t, b);
            v.insert(v.end(), s.begin(), s.end());
        }
        truth.push_back(std::move(v));
    }
    const FilterState state = filter_prefix(model, xs, prefix);
    const Rollout r = model.rollout(state, T - prefix, n, sequence_stream(seed, prefix, xs));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v;
        for (std::size_t t = first; t < T; ++t) {
            const auto& mean = r.emissions[i][t - prefix].mean;
            v.insert(v.end(), mean.begin(), mean.end());
        }
        pred.push_back(std::move(v));
    }
    return wasserstein(pred, truth);
}

std::vector<std::size_t> pick_anchors(const SequenceBatch& batch, std::size_t count, std::uint64_t seed) {
    require(count <= batch.B, "pick_anchors: more anchors than sequences");
    std::vector<std::pair<std::uint64_t, std::size_t>> keys(batch.B);
    for (std::size_t b = 0; b < batch.B; ++b) keys[b] = {sequence_stream(seed, 0, batch.sequence(b)), b};
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end());
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].second;
    return out;
}

const std::set<std::string>& known_metrics() {
    static const std::set<std::string> names{"recon_ll", "one_step", "multi_step", "w_dist"};
    return names;
}

EvalReport evaluate(const Model& model, const SequenceBatch& batch, const EvalOptions& opt) {
    check_batch(model, batch);
    for (const auto& m : opt.metrics) require(known_metrics().count(m) != 0, "unknown metric '" + m + "'");
    EvalReport r;
    r.n_sequences = batch.B;
    r.n_samples = opt.samples;
    r.prefix = opt.prefix;
    r.switch_samples = opt.switch_samples;
    r.parameter_count = model.parameter_count();
    r.seed = opt.seed;
    if (opt.metrics.count("recon_ll")) r.recon_ll = recon_ll(model, batch, FilterMode::mean, opt.seed);
    if (opt.metrics.count("one_step")) r.one_step = one_step_loss(model, batch, opt.switch_samples, opt.seed);
    if (opt.metrics.count("multi_step")) r.multi_step = multi_step_loss(model, batch, opt.prefix, opt.samples, opt.seed);
    if (opt.metrics.count("w_dist")) {
        const std::size_t n = std::min(opt.samples, batch.B);
        const std::size_t anchors = std::max<std::size_t>(1, std::min(opt.anchors, batch.B));
        double acc = 0.0;
        for (std::size_t a : pick_anchors(batch, anchors, opt.seed))
            acc += wasserstein_for_anchor(model, batch, a, opt.prefix, n, opt.wasserstein, opt.seed);
        r.w_dist = acc / static_cast<double>(anchors);
    }
    return r;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os.precision(12);
    if (!label.empty()) os << "label=" << label << '\n';
    if (recon_ll) os << "recon_ll=" << *recon_ll << '\n';
    if (one_step) os << "one_step=" << *one_step << '\n';
    if (multi_step) os << "multi_step=" << *multi_step << '\n';
    if (w_dist) os << "w_dist=" << *w_dist << '\n';
    os << "n_sequences=" << n_sequences << '\n';
    os << "n_samples=" << n_samples << '\n';
    os << "prefix=" << prefix << '\n';
    os << "switch_samples=" << switch_samples << '\n';
    os << "parameter_count=" << parameter_count << '\n';
    os << "seed=" << seed << '\n';
    return os.str();
}

void EvalReport::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << to_text();
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void EvalReport::append_to_table(const std::filesystem::path& path) const {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    if (fresh) {
        os << "| Model | recon | 1-step | multi-step | w-dist | # parameters |\n";
        os << "|---|---|---|---|---|---|\n";
    }
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(2);
        s << *v;
        return s.str();
    };
    os << "| " << (label.empty() ? "model" : label) << " | " << cell(recon_ll) << " | " << cell(one_step) << " | "
       << cell(multi_step) << " | " << cell(w_dist) << " | " << parameter_count << " |\n";
}

}  // namespace srkn
