#pragma once

#include <cstdint>
#include <vector>

#include "dla/tape.hpp"
#include "dla/tensor.hpp"

namespace dla::adapters {

using numeric::Rng;
using numeric::Tape;
using numeric::Tensor;
using numeric::TensorPtr;

/// Pretrained weight; excluded from every gradient update by construction
/// (requires_grad stays false, so the tape never touches it).
struct FrozenLinear {
    TensorPtr W;  // d_out x d_in

    int d_in() const { return W->dim(1); }
    int d_out() const { return W->dim(0); }
};

FrozenLinear make_frozen_linear(int d_out, int d_in, Rng& rng);

struct LoraParams {
    TensorPtr A;  // r x d_in
    TensorPtr B;  // d_out x r, zero at init so the adapter starts silent
    int rank = 0;
    double alpha = 0.0;
    double dropout = 0.0;
    // Multiplier on the B·A branch. Initialized to rank/alpha; kept as a
    // field so the opposite alpha/rank convention stays expressible.
    double scale = 0.0;

    std::vector<TensorPtr> trainable() const { return {A, B}; }
};

struct DualLoraParams {
    TensorPtr S;          // r x d_in, skill projection
    TensorPtr T;          // r x d_in, task gating projection
    TensorPtr B;          // d_out x r
    TensorPtr norm_gain;  // r, ones at init
    TensorPtr norm_bias;  // r, zeros at init
    int rank = 0;
    double alpha = 0.0;
    double dropout = 0.0;
    double scale = 0.0;
    double eps = 1e-5;

    std::vector<TensorPtr> trainable() const { return {S, T, B, norm_gain, norm_bias}; }
};

enum class MoeStrategy { kTopK, kSoftmaxDense, kRectified };

const char* moe_strategy_name(MoeStrategy s);

struct MoeParams {
    std::vector<LoraParams> experts;  // per-expert ranks may differ
    TensorPtr router;                 // E x d_in, bias-free
    MoeStrategy strategy = MoeStrategy::kSoftmaxDense;
    int top_k = 1;  // used by kTopK only

    int expert_count() const { return static_cast<int>(experts.size()); }
    int total_rank() const {
        int r = 0;
        for (const auto& e : experts) r += e.rank;
        return r;
    }
    std::vector<TensorPtr> trainable() const {
        std::vector<TensorPtr> out{router};
        for (const auto& e : experts) {
            out.push_back(e.A);
            out.push_back(e.B);
        }
        return out;
    }
};

// Fan-in uniform(-1/sqrt(d_in), 1/sqrt(d_in)) for A/S/T/router; B zero;
// norm affine identity. Identical seeds give bitwise-identical params.
LoraParams init_lora(int d_in, int d_out, int rank, double alpha, double dropout,
                     std::uint64_t seed);
DualLoraParams init_dual_lora(int d_in, int d_out, int rank, double alpha, double dropout,
                              std::uint64_t seed);
MoeParams init_moe(int d_in, int d_out, const std::vector<int>& ranks, MoeStrategy strategy,
                   int top_k, double dropout, std::uint64_t seed,
                   double alpha_factor = 2.0 /* alpha_e = factor * rank_e */);

// Forward passes on single token vectors x [d_in]. Passing a dropout rng
// selects training mode; eval mode applies no dropout.
TensorPtr lora_forward(Tape& tape, const FrozenLinear& layer, const LoraParams& p,
                       const TensorPtr& x, Rng* dropout_rng = nullptr);
TensorPtr dual_lora_forward(Tape& tape, const FrozenLinear& layer, const DualLoraParams& p,
                            const TensorPtr& x, Rng* dropout_rng = nullptr);
TensorPtr moe_forward(Tape& tape, const FrozenLinear& layer, const MoeParams& p,
                      const TensorPtr& x, Rng* dropout_rng = nullptr);

// Same forward with the ReLU(Tx) gate replaced by a caller-supplied vector;
// used by the grouped-decomposition checks.
TensorPtr dual_lora_forward_fixed_gate(Tape& tape, const FrozenLinear& layer,
                                       const DualLoraParams& p, const TensorPtr& x,
                                       const TensorPtr& gate);

// Batched forwards over token rows X [n x d_in] -> [n x d_out].
TensorPtr lora_forward_batch(Tape& tape, const FrozenLinear& layer, const LoraParams& p,
                             const TensorPtr& x_rows, Rng* dropout_rng = nullptr);

// Skill-space intermediates of a batched dual forward, row per token.
struct DualBatchTrace {
    TensorPtr skill_norm;  // Norm(Sx), n x r
    TensorPtr gated;       // Norm(Sx) . relu(Tx), n x r
};
TensorPtr dual_lora_forward_batch(Tape& tape, const FrozenLinear& layer, const DualLoraParams& p,
                                  const TensorPtr& x_rows, Rng* dropout_rng = nullptr,
                                  DualBatchTrace* trace = nullptr);
TensorPtr moe_forward_batch(Tape& tape, const FrozenLinear& layer, const MoeParams& p,
                            const TensorPtr& x_rows, Rng* dropout_rng = nullptr);

// Router gates for a batch of logit rows [n x E] under the given strategy.
// TopK keeps softmax mass on the k largest logits per row (lowest index wins
// ties), dense softmaxes all logits, rectified applies an unnormalized ReLU.
TensorPtr moe_gates(Tape& tape, const TensorPtr& logits, MoeStrategy strategy, int top_k);

// Trainable-parameter counts (frozen W excluded).
std::size_t param_count(const LoraParams& p, int d_in, int d_out);
std::size_t param_count(const DualLoraParams& p, int d_in, int d_out);
std::size_t param_count(const MoeParams& p, int d_in, int d_out);

/// B · diag(gate) · S with layer normalization bypassed; the linear map the
/// adapter realizes under a fixed binary gate, used for rank analysis.
Tensor effective_update(const DualLoraParams& p, const std::vector<double>& gate);

/// Fraction of strictly positive ReLU(Tx) entries over n standard-normal
/// probe inputs; logged during training to watch for dead-gate collapse.
double gate_liveness(const DualLoraParams& p, int n_probes, Rng& rng);

}  // namespace dla::adapters
