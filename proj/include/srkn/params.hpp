#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace srkn {

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    std::size_t numel() const { return data.size(); }
};

// Named parameter tensors in registration order. Registration order is the
// canonical order for checkpoints, gradient buffers and parameter counts.
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, std::vector<double> data);

    std::size_t size() const { return tensors_.size(); }
    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index(std::string_view name) const;

    std::size_t total_count() const;

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

private:
    std::vector<Tensor> tensors_;
};

using Gradients = std::vector<std::vector<double>>;

Gradients zero_gradients(const ParamStore& store);
void add_into(Gradients& acc, const Gradients& g);
void scale(Gradients& g, double s);
double global_norm(const Gradients& g);

}  // namespace srkn
