#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dla::numeric {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Dense row-major tensor of doubles. Gradient storage lives on the tensor
/// itself so parameters can accumulate gradients across tape lifetimes.
class Tensor {
  public:
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until touched by a backward pass

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size()) {
            throw ShapeError("tensor data length does not match shape");
        }
    }

    static std::size_t numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    /// NaN/Inf never propagates silently: callers probe here at checkpoints.
    bool finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), 0.0);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Set by the tape on op outputs; gradients flow only through live tensors.
    bool grad_live() const { return requires_grad || node_output_live_; }

  private:
    bool node_output_live_ = false;
    friend class Tape;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr tensor(std::vector<int> shape) { return std::make_shared<Tensor>(std::move(shape)); }

inline TensorPtr tensor(std::vector<int> shape, std::vector<double> data) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data));
}

inline TensorPtr scalar(double v) { return tensor({1}, {v}); }

inline TensorPtr param(std::vector<int> shape) {
    auto t = tensor(std::move(shape));
    t->requires_grad = true;
    return t;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace dla::numeric
