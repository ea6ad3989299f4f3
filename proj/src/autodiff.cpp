#include "srkn/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "srkn/errors.hpp"
#include "srkn/gaussian.hpp"
#include "srkn/kernels.hpp"

namespace srkn::ad {

std::span<const double> Var::value() const { return tape->value(id); }
std::size_t Var::size() const { return tape->value(id).size(); }
double Var::scalar() const {
    assert(size() == 1);
    return value()[0];
}

Tape::Tape(const ParamStore* params, bool track_params)
    : params_(params), track_params_(track_params) {
    if (params_) param_nodes_.assign(params_->size(), -1);
    nodes_.reserve(1024);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::vector<double> value) { return push(Node{std::move(value), {}, {}, false}); }

Var Tape::variable(std::vector<double> value) { return push(Node{std::move(value), {}, {}, true}); }

Var Tape::param(std::size_t index) {
    require(params_ != nullptr && index < params_->size(), "tape has no such parameter");
    if (param_nodes_[index] >= 0)
        return Var{this, static_cast<std::uint32_t>(param_nodes_[index])};
    const auto& data = (*params_)[index].data;
    Node n;
    n.ext = data.data();
    n.ext_size = data.size();
    n.requires_grad = track_params_;
    Var v = push(std::move(n));
    param_nodes_[index] = v.id;
    return v;
}

Var Tape::param(std::string_view name) {
    require(params_ != nullptr, "tape has no parameter store");
    return param(params_->index(name));
}

Var Tape::record(std::vector<double> value, std::span<const Var> parents, Backward back) {
    bool rg = false;
    for (Var p : parents) rg |= nodes_[p.id].requires_grad;
    if (!rg) back = nullptr;
    return push(Node{std::move(value), {}, std::move(back), rg});
}

std::span<double> Tape::adj(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.grad.empty()) n.grad.assign(n.ext ? n.ext_size : n.value.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var root, double seed) {
    require(root.tape == this, "backward: variable from another tape");
    require(value(root.id).size() == 1, "backward: root must be a scalar");
    auto g = adj(root.id);
    if (g.empty()) return;
    g[0] += seed;
    for (std::int64_t id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty() || !n.back) continue;
        n.back(*this, static_cast<std::uint32_t>(id));
    }
}

void Tape::accumulate_param_grads(Gradients& out) const {
    for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
        if (param_nodes_[i] < 0) continue;
        const auto& g = nodes_[static_cast<std::size_t>(param_nodes_[i])].grad;
        if (g.empty()) continue;
        auto& dst = out[i];
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
}

namespace {

void same_size(Var a, Var b, const char* op) {
    if (a.size() != b.size()) throw ContractError(std::string(op) + ": size mismatch");
}

template <class F, class D>
Var unary(Var a, F f, D dfdx) {
    auto av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    const std::uint32_t ai = a.id;
    return a.tape->record(std::move(out), {a}, [ai, dfdx](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto y = t.value(self);
        auto x = t.value(ai);
        auto da = t.adj(ai);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * dfdx(x[i], y[i]);
    });
}

}  // namespace

Var add(Var a, Var b) {
    same_size(a, b, "add");
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return a.tape->record(std::move(out), {a, b},
                          [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
                              auto g = t.grad(self);
                              if (auto da = t.adj(ai); !da.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                              if (auto db = t.adj(bi); !db.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                          });
}

Var sub(Var a, Var b) {
    same_size(a, b, "sub");
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return a.tape->record(std::move(out), {a, b},
                          [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
                              auto g = t.grad(self);
                              if (auto da = t.adj(ai); !da.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                              if (auto db = t.adj(bi); !db.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                          });
}

Var mul(Var a, Var b) {
    same_size(a, b, "mul");
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return a.tape->record(std::move(out), {a, b},
                          [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
                              auto g = t.grad(self);
                              auto av = t.value(ai), bv = t.value(bi);
                              if (auto da = t.adj(ai); !da.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
                              if (auto db = t.adj(bi); !db.empty())
                                  for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
                          });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sum_all(std::span<const Var> terms) {
    require(!terms.empty(), "sum_all: no terms");
    const std::size_t n = terms[0].size();
    std::vector<double> out(n, 0.0);
    for (Var v : terms) {
        require(v.size() == n, "sum_all: size mismatch");
        auto vv = v.value();
        for (std::size_t i = 0; i < n; ++i) out[i] += vv[i];
    }
    std::vector<std::uint32_t> ids;
    ids.reserve(terms.size());
    for (Var v : terms) ids.push_back(v.id);
    return terms[0].tape->record(std::move(out), terms, [ids = std::move(ids)](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        for (std::uint32_t id : ids) {
            auto d = t.adj(id);
            if (d.empty()) continue;
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var positive(Var a) {
    return unary(a, [](double x) { return positive_floor(x); },
                 [](double x, double) { return positive_floor_grad(x); });
}

Var concat(std::span<const Var> parts) {
    require(parts.size() > 0, "concat: no parts");
    Tape* tape = parts.begin()->tape;
    std::vector<double> out;
    std::vector<std::uint32_t> ids;
    for (Var p : parts) {
        auto v = p.value();
        out.insert(out.end(), v.begin(), v.end());
        ids.push_back(p.id);
    }
    return tape->record(std::move(out), parts, [ids = std::move(ids)](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        std::size_t off = 0;
        for (std::uint32_t id : ids) {
            const std::size_t n = t.value(id).size();
            if (auto d = t.adj(id); !d.empty())
                for (std::size_t i = 0; i < n; ++i) d[i] += g[off + i];
            off += n;
        }
    });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
    require(offset + length <= a.size(), "slice: out of range");
    auto av = a.value();
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(offset),
                            av.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return a.tape->record(std::move(out), {a}, [ai = a.id, offset](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto d = t.adj(ai);
        for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
    });
}

Var sum(Var a) {
    double acc = 0.0;
    for (double x : a.value()) acc += x;
    return a.tape->record({acc}, {a}, [ai = a.id](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        for (double& d : t.adj(ai)) d += g;
    });
}

Var linear(Var W, Var b, Var x) {
    const std::size_t rows = b.size();
    const std::size_t cols = x.size();
    require(W.size() == rows * cols, "linear: weight shape does not match bias/input");
    std::vector<double> out(rows);
    kernels::gemv(W.value(), x.value(), b.value(), out);
    return W.tape->record(
        std::move(out), {W, b, x},
        [wi = W.id, bi = b.id, xi = x.id](Tape& t, std::uint32_t self) {
            auto g = t.grad(self);
            if (auto dW = t.adj(wi); !dW.empty()) kernels::outer_acc(g, t.value(xi), dW);
            if (auto db = t.adj(bi); !db.empty())
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
            if (auto dx = t.adj(xi); !dx.empty()) kernels::gemv_t_acc(t.value(wi), g, dx);
        });
}

Var softmax(Var logits) {
    std::vector<double> out = srkn::softmax(logits.value());
    return logits.tape->record(std::move(out), {logits}, [li = logits.id](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto y = t.value(self);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        auto d = t.adj(li);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += y[i] * (g[i] - gy);
    });
}

Var log_softmax(Var logits) {
    auto x = logits.value();
    const double lse = srkn::log_sum_exp(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - lse;
    return logits.tape->record(std::move(out), {logits}, [li = logits.id](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto y = t.value(self);
        double gs = 0.0;
        for (double v : g) gs += v;
        auto d = t.adj(li);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] - std::exp(y[i]) * gs;
    });
}

Var log_sum_exp(Var v) {
    const double out = srkn::log_sum_exp(v.value());
    return v.tape->record({out}, {v}, [vi = v.id](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        const double y = t.value(self)[0];
        auto x = t.value(vi);
        auto d = t.adj(vi);
        for (std::size_t i = 0; i < x.size(); ++i) d[i] += g * std::exp(x[i] - y);
    });
}

}  // namespace srkn::ad
