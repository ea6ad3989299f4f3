#include "srkn/params.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "srkn/errors.hpp"

namespace srkn {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape,
                            std::vector<double> data) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          std::multiplies<>());
    require(n == data.size(), "parameter '" + name + "': data does not match shape");
    require(!find(name), "duplicate parameter name '" + name + "'");
    tensors_.push_back({std::move(name), std::move(shape), std::move(data)});
    return tensors_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].name == name) return i;
    return std::nullopt;
}

std::size_t ParamStore::index(std::string_view name) const {
    auto i = find(name);
    require(i.has_value(), "unknown parameter '" + std::string(name) + "'");
    return *i;
}

std::size_t ParamStore::total_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

Gradients zero_gradients(const ParamStore& store) {
    Gradients g(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) g[i].assign(store[i].numel(), 0.0);
    return g;
}

void add_into(Gradients& acc, const Gradients& g) {
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += g[i][j];
}

void scale(Gradients& g, double s) {
    for (auto& v : g)
        for (double& x : v) x *= s;
}

double global_norm(const Gradients& g) {
    double acc = 0.0;
    for (const auto& v : g)
        for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace srkn
