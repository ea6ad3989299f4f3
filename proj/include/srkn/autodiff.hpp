#pragma once

// Reverse-mode differentiation on a per-evaluation tape of vector nodes.
//
// A Tape is owned by one evaluation stream (one sequence, one thread). Nodes
// are appended in evaluation order; backward() walks them in reverse and
// calls each node's local adjoint rule. Parameter leaves are created once per
// tape and their gradients are collected into a Gradients buffer afterwards.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "srkn/params.hpp"

namespace srkn::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    std::span<const double> value() const;
    std::size_t size() const;
    double operator[](std::size_t i) const { return value()[i]; }
    double scalar() const;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::uint32_t self)>;

    // With track_params = false parameter leaves are plain constants that
    // alias the store, so nothing is recorded for the backward pass.
    explicit Tape(const ParamStore* params = nullptr, bool track_params = true);

    Var constant(std::vector<double> value);
    Var constant(std::span<const double> value) {
        return constant(std::vector<double>(value.begin(), value.end()));
    }
    // Leaf that receives a gradient (used for tests and input sensitivities).
    Var variable(std::vector<double> value);
    Var param(std::size_t index);
    Var param(std::string_view name);

    Var record(std::vector<double> value, std::span<const Var> parents, Backward back);
    Var record(std::vector<double> value, std::initializer_list<Var> parents, Backward back) {
        return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                      std::move(back));
    }

    std::span<const double> value(std::uint32_t id) const {
        const Node& n = nodes_[id];
        if (n.ext) return {n.ext, n.ext_size};
        return n.value;
    }
    std::span<const double> grad(std::uint32_t id) const { return nodes_[id].grad; }
    std::span<const double> grad(Var v) const { return grad(v.id); }
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return requires_grad(v.id); }

    // Adjoint buffer of a node for accumulation; empty span if the node does
    // not require a gradient.
    std::span<double> adj(std::uint32_t id);
    std::span<double> adj(Var v) { return adj(v.id); }

    void backward(Var root, double seed = 1.0);
    void accumulate_param_grads(Gradients& out) const;

    const ParamStore* params() const { return params_; }
    std::size_t node_count() const { return nodes_.size(); }

    // Counter for predict steps whose covariance needed repair.
    void note_repair() { ++repairs_; }
    std::size_t repairs() const { return repairs_; }

private:
    struct Node {
        std::vector<double> value;
        std::vector<double> grad;
        Backward back;
        bool requires_grad = false;
        const double* ext = nullptr;  // aliases parameter storage
        std::size_t ext_size = 0;
    };

    Var push(Node node);

    const ParamStore* params_;
    bool track_params_;
    std::vector<Node> nodes_;
    std::vector<std::int64_t> param_nodes_;
    std::size_t repairs_ = 0;
};

// Elementwise arithmetic (equal sizes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
// Sum of several scalar or equal-size nodes.
Var sum_all(std::span<const Var> terms);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
// softplus(a) + kVarianceFloor, elementwise.
Var positive(Var a);

Var concat(std::span<const Var> parts);
inline Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice(Var a, std::size_t offset, std::size_t length);
Var sum(Var a);

// W (rows x cols, row-major) x + b; rows = b.size().
Var linear(Var W, Var b, Var x);

Var softmax(Var logits);
Var log_softmax(Var logits);
Var log_sum_exp(Var v);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace srkn::ad
