#pragma once

#include <functional>
#include <vector>

#include "dla/rng.hpp"
#include "dla/tensor.hpp"

namespace dla::numeric {

/// Reverse-mode tape. Ops append nodes in execution order (inputs always
/// precede their consumers), and backward() replays the node list once in
/// reverse, accumulating gradients into every grad-live input tensor.
///
/// Tensors written to the tape are treated as immutable; parameter tensors
/// keep their gradient buffers across tapes so training steps can accumulate.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // a [m×k] · b [k×n] -> [m×n]
    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
    // A [m×k] · x [k] -> [m]
    TensorPtr matvec(const TensorPtr& a, const TensorPtr& x);
    TensorPtr transpose(const TensorPtr& a);

    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
    TensorPtr scale(const TensorPtr& a, double c);
    // out = a * s[0] with a 1-element tensor s
    TensorPtr scalar_mul(const TensorPtr& a, const TensorPtr& s);

    TensorPtr relu(const TensorPtr& a);
    TensorPtr softmax(const TensorPtr& a, int axis);
    // Normalizes the last axis with biased variance; gain/bias are 1-d of
    // that axis length.
    TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                         double eps);
    // map [H×W×C], pos [2] (row, col); positions clamp to the grid and the
    // position gradient is zero in the clamped regime.
    TensorPtr bilinear_sample(const TensorPtr& map, const TensorPtr& pos);

    // Axis-0 selection for 1-d and 2-d tensors.
    TensorPtr index_select(const TensorPtr& a, std::vector<int> indices);
    TensorPtr row(const TensorPtr& a, int i);   // 2-d -> 1-d
    TensorPtr col(const TensorPtr& a, int j);   // 2-d -> 1-d
    TensorPtr rows(const TensorPtr& a, int r0, int r1);  // half-open row range

    TensorPtr concat(const std::vector<TensorPtr>& parts);  // 1-d
    TensorPtr vstack(const std::vector<TensorPtr>& blocks); // 2-d blocks, equal cols
    // out(i,j) = a(i,j) * s(i)
    TensorPtr row_scale(const TensorPtr& a, const TensorPtr& s);
    TensorPtr col_sum(const TensorPtr& a);  // [m×n] -> [n]
    TensorPtr sum(const TensorPtr& a);      // -> [1]

    // Inverted dropout on the tape; identity (no node) when not training or
    // when p == 0.
    TensorPtr dropout(const TensorPtr& a, double p, Rng& rng, bool training);

    /// Accumulates d(loss)/d(t) into t->grad for every grad-live tensor
    /// reachable from the tape. loss must be scalar; calling twice on the
    /// same tape is a contract violation.
    void backward(const TensorPtr& loss);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    bool backward_done_ = false;

    TensorPtr make_output(std::vector<int> shape, std::initializer_list<const TensorPtr*> inputs);
    void push(std::function<void()> fn) { nodes_.push_back({std::move(fn)}); }
};

/// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
/// Independent of the tape so it can serve as the gradient oracle.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace dla::numeric
