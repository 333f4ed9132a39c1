#include "dla/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dla::adapters {

using numeric::ShapeError;
using numeric::fill_uniform;
using numeric::tensor;

namespace {

constexpr double kMaskedLogit = -1e30;  // exp underflows to exactly zero

TensorPtr fan_in_matrix(int rows, int cols, int d_in, Rng& rng) {
    auto t = numeric::param({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    fill_uniform(*t, rng, -bound, bound);
    return t;
}

// dropout applies to the adapter-branch input only, and only in training mode
TensorPtr branch_input(Tape& tape, const TensorPtr& x, double p, Rng* rng) {
    if (rng == nullptr || p == 0.0) return x;
    return tape.dropout(x, p, *rng, true);
}

}  // namespace

const char* moe_strategy_name(MoeStrategy s) {
    switch (s) {
        case MoeStrategy::kTopK: return "topk";
        case MoeStrategy::kSoftmaxDense: return "softmax";
        case MoeStrategy::kRectified: return "rectified";
    }
    return "?";
}

FrozenLinear make_frozen_linear(int d_out, int d_in, Rng& rng) {
    auto w = tensor({d_out, d_in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    fill_uniform(*w, rng, -bound, bound);
    return FrozenLinear{w};
}

LoraParams init_lora(int d_in, int d_out, int rank, double alpha, double dropout,
                     std::uint64_t seed) {
    if (rank < 1 || d_in < 1 || d_out < 1) throw numeric::ContractError("init_lora: bad dims");
    Rng rng(seed);
    LoraParams p;
    p.A = fan_in_matrix(rank, d_in, d_in, rng);
    p.B = numeric::param({d_out, rank});
    p.rank = rank;
    p.alpha = alpha;
    p.dropout = dropout;
    p.scale = static_cast<double>(rank) / alpha;
    return p;
}

DualLoraParams init_dual_lora(int d_in, int d_out, int rank, double alpha, double dropout,
                              std::uint64_t seed) {
    if (rank < 1 || d_in < 1 || d_out < 1)
        throw numeric::ContractError("init_dual_lora: bad dims");
    Rng rng(seed);
    DualLoraParams p;
    p.S = fan_in_matrix(rank, d_in, d_in, rng);
    p.T = fan_in_matrix(rank, d_in, d_in, rng);
    p.B = numeric::param({d_out, rank});
    p.norm_gain = numeric::param({rank});
    std::fill(p.norm_gain->data.begin(), p.norm_gain->data.end(), 1.0);
    p.norm_bias = numeric::param({rank});
    p.rank = rank;
    p.alpha = alpha;
    p.dropout = dropout;
    p.scale = static_cast<double>(rank) / alpha;
    return p;
}

MoeParams init_moe(int d_in, int d_out, const std::vector<int>& ranks, MoeStrategy strategy,
                   int top_k, double dropout, std::uint64_t seed, double alpha_factor) {
    if (ranks.empty()) throw numeric::ContractError("init_moe: need at least one expert");
    if (strategy == MoeStrategy::kTopK &&
        (top_k < 1 || top_k > static_cast<int>(ranks.size()))) {
        throw numeric::ContractError("init_moe: top_k out of range");
    }
    Rng rng(seed);
    MoeParams p;
    p.strategy = strategy;
    p.top_k = top_k;
    for (int r : ranks) {
        LoraParams e;
        e.A = fan_in_matrix(r, d_in, d_in, rng);
        e.B = numeric::param({d_out, r});
        e.rank = r;
        e.alpha = alpha_factor * r;
        e.dropout = dropout;
        e.scale = static_cast<double>(r) / e.alpha;
        p.experts.push_back(std::move(e));
    }
    p.router = fan_in_matrix(static_cast<int>(ranks.size()), d_in, d_in, rng);
    return p;
}

TensorPtr lora_forward(Tape& tape, const FrozenLinear& layer, const LoraParams& p,
                       const TensorPtr& x, Rng* dropout_rng) {
    auto base = tape.matvec(layer.W, x);
    auto xb = branch_input(tape, x, p.dropout, dropout_rng);
    auto delta = tape.matvec(p.B, tape.matvec(p.A, xb));
    return tape.add(base, tape.scale(delta, p.scale));
}

TensorPtr dual_lora_forward(Tape& tape, const FrozenLinear& layer, const DualLoraParams& p,
                            const TensorPtr& x, Rng* dropout_rng) {
    auto base = tape.matvec(layer.W, x);
    auto xb = branch_input(tape, x, p.dropout, dropout_rng);
    auto skill = tape.layer_norm(tape.matvec(p.S, xb), p.norm_gain, p.norm_bias, p.eps);
    auto gate = tape.relu(tape.matvec(p.T, xb));
    auto delta = tape.matvec(p.B, tape.mul(skill, gate));
    return tape.add(base, tape.scale(delta, p.scale));
}

TensorPtr dual_lora_forward_fixed_gate(Tape& tape, const FrozenLinear& layer,
                                       const DualLoraParams& p, const TensorPtr& x,
                                       const TensorPtr& gate) {
    auto base = tape.matvec(layer.W, x);
    auto skill = tape.layer_norm(tape.matvec(p.S, x), p.norm_gain, p.norm_bias, p.eps);
    auto delta = tape.matvec(p.B, tape.mul(skill, gate));
    return tape.add(base, tape.scale(delta, p.scale));
}

TensorPtr moe_gates(Tape& tape, const TensorPtr& logits, MoeStrategy strategy, int top_k) {
    const bool batched = logits->ndim() == 2;
    const int n = batched ? logits->dim(0) : 1;
    const int e = batched ? logits->dim(1) : logits->dim(0);
    switch (strategy) {
        case MoeStrategy::kSoftmaxDense:
            return tape.softmax(logits, batched ? 1 : 0);
        case MoeStrategy::kRectified:
            return tape.relu(logits);
        case MoeStrategy::kTopK: {
            if (top_k > e) throw numeric::ContractError("moe_gates: k exceeds expert count");
            // additive mask sends non-selected logits to -inf territory; the
            // selection itself is piecewise constant, so treating the mask as
            // data is the exact gradient
            auto mask = tensor(logits->shape);
            for (int i = 0; i < n; ++i) {
                const double* row = logits->data.data() + static_cast<std::size_t>(i) * e;
                std::vector<int> order(e);
                std::iota(order.begin(), order.end(), 0);
                std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                                  [&](int a, int b) {
                                      if (row[a] != row[b]) return row[a] > row[b];
                                      return a < b;  // deterministic tie-break
                                  });
                for (int j = top_k; j < e; ++j)
                    mask->data[static_cast<std::size_t>(i) * e + order[j]] = kMaskedLogit;
            }
            return tape.softmax(tape.add(logits, mask), batched ? 1 : 0);
        }
    }
    throw numeric::ContractError("moe_gates: unknown strategy");
}

TensorPtr moe_forward(Tape& tape, const FrozenLinear& layer, const MoeParams& p,
                      const TensorPtr& x, Rng* dropout_rng) {
    auto z = tape.matvec(layer.W, x);
    auto gates = moe_gates(tape, tape.matvec(p.router, x), p.strategy, p.top_k);
    for (int e = 0; e < p.expert_count(); ++e) {
        const LoraParams& ex = p.experts[static_cast<std::size_t>(e)];
        auto xb = branch_input(tape, x, ex.dropout, dropout_rng);
        auto delta = tape.matvec(ex.B, tape.matvec(ex.A, xb));
        auto weighted = tape.scalar_mul(tape.scale(delta, ex.scale),
                                        tape.index_select(gates, {e}));
        z = tape.add(z, weighted);
    }
    return z;
}

TensorPtr lora_forward_batch(Tape& tape, const FrozenLinear& layer, const LoraParams& p,
                             const TensorPtr& x_rows, Rng* dropout_rng) {
    auto base = tape.matmul(x_rows, tape.transpose(layer.W));
    auto xb = branch_input(tape, x_rows, p.dropout, dropout_rng);
    auto delta = tape.matmul(tape.matmul(xb, tape.transpose(p.A)), tape.transpose(p.B));
    return tape.add(base, tape.scale(delta, p.scale));
}

TensorPtr dual_lora_forward_batch(Tape& tape, const FrozenLinear& layer, const DualLoraParams& p,
                                  const TensorPtr& x_rows, Rng* dropout_rng,
                                  DualBatchTrace* trace) {
    auto base = tape.matmul(x_rows, tape.transpose(layer.W));
    auto xb = branch_input(tape, x_rows, p.dropout, dropout_rng);
    auto skill = tape.layer_norm(tape.matmul(xb, tape.transpose(p.S)), p.norm_gain, p.norm_bias,
                                 p.eps);
    auto gate = tape.relu(tape.matmul(xb, tape.transpose(p.T)));
    auto gated = tape.mul(skill, gate);
    if (trace) {
        trace->skill_norm = skill;
        trace->gated = gated;
    }
    auto delta = tape.matmul(gated, tape.transpose(p.B));
    return tape.add(base, tape.scale(delta, p.scale));
}

TensorPtr moe_forward_batch(Tape& tape, const FrozenLinear& layer, const MoeParams& p,
                            const TensorPtr& x_rows, Rng* dropout_rng) {
    auto z = tape.matmul(x_rows, tape.transpose(layer.W));
    auto gates = moe_gates(tape, tape.matmul(x_rows, tape.transpose(p.router)), p.strategy,
                           p.top_k);
    for (int e = 0; e < p.expert_count(); ++e) {
        const LoraParams& ex = p.experts[static_cast<std::size_t>(e)];
        auto xb = branch_input(tape, x_rows, ex.dropout, dropout_rng);
        auto delta = tape.matmul(tape.matmul(xb, tape.transpose(ex.A)), tape.transpose(ex.B));
        auto weighted = tape.row_scale(tape.scale(delta, ex.scale), tape.col(gates, e));
        z = tape.add(z, weighted);
    }
    return z;
}

std::size_t param_count(const LoraParams& p, int d_in, int d_out) {
    return static_cast<std::size_t>(p.rank) * (static_cast<std::size_t>(d_in) + d_out);
}

std::size_t param_count(const DualLoraParams& p, int d_in, int d_out) {
    return static_cast<std::size_t>(p.rank) * (2ull * d_in + d_out) + 2ull * p.rank;
}

std::size_t param_count(const MoeParams& p, int d_in, int d_out) {
    std::size_t total = 0;
    for (const auto& e : p.experts) total += param_count(e, d_in, d_out);
    return total + static_cast<std::size_t>(p.expert_count()) * d_in;
}

Tensor effective_update(const DualLoraParams& p, const std::vector<double>& gate) {
    if (gate.size() != static_cast<std::size_t>(p.rank))
        throw ShapeError("effective_update: gate length must equal rank");
    for (double g : gate) {
        if (g != 0.0 && g != 1.0)
            throw numeric::ContractError("effective_update: gate entries must be binary");
    }
    const int d_out = p.B->dim(0), r = p.rank, d_in = p.S->dim(1);
    Tensor out({d_out, d_in});
    for (int i = 0; i < d_out; ++i) {
        for (int k = 0; k < r; ++k) {
            const double w = p.B->at(i, k) * gate[static_cast<std::size_t>(k)];
            if (w == 0.0) continue;
            for (int j = 0; j < d_in; ++j) out.at(i, j) += w * p.S->at(k, j);
        }
    }
    return out;
}

double gate_liveness(const DualLoraParams& p, int n_probes, Rng& rng) {
    const int d_in = p.T->dim(1), r = p.rank;
    std::size_t positive = 0;
    std::vector<double> x(static_cast<std::size_t>(d_in));
    for (int s = 0; s < n_probes; ++s) {
        for (double& v : x) v = rng.normal();
        for (int k = 0; k < r; ++k) {
            double acc = 0.0;
            for (int j = 0; j < d_in; ++j) acc += p.T->at(k, j) * x[static_cast<std::size_t>(j)];
            if (acc > 0.0) ++positive;
        }
    }
    return static_cast<double>(positive) / (static_cast<double>(n_probes) * r);
}

}  // namespace dla::adapters
