#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dla/adapters.hpp"
#include "dla/dataset.hpp"
#include "dla/vce.hpp"

namespace dla::conflictbench {

using adapters::DualLoraParams;
using adapters::FrozenLinear;
using adapters::LoraParams;
using adapters::MoeParams;
using adapters::MoeStrategy;
using numeric::Rng;
using numeric::Tape;
using numeric::TensorPtr;

enum class AdapterKind { kNone, kLora, kDualLora, kMoe };

AdapterKind adapter_kind_from_name(const std::string& name);
const char* adapter_kind_name(AdapterKind k);

/// How adapters are attached to the query/value projections.
struct AdapterChoice {
    AdapterKind kind = AdapterKind::kNone;
    int rank = 64;                    // lora / dual
    std::vector<int> moe_ranks;       // moe expert ranks
    MoeStrategy strategy = MoeStrategy::kTopK;
    int top_k = 2;
    double alpha_factor = 2.0;        // alpha = factor * rank
    double dropout = 0.05;
    int total_rank() const;
};

using AdapterSlot = std::variant<std::monostate, LoraParams, DualLoraParams, MoeParams>;

struct ToyModelConfig {
    int d_model = 64;
    int n_blocks = 2;
    int seq_len = 16;     // one task token plus seq_len - 1 content tokens
    int d_ff = 128;
    int n_tasks = 2;
    int input_dim = 60;   // must equal (seq_len - 1) * chunk_dim
    int output_dim = 16;
    AdapterChoice adapter;
    double pos_scale = 1.0;
    // residual blocks stay perturbative: x + scale * sublayer(x), keeping the
    // frozen backbone close to an orthogonal-ish content-preserving map
    double sublayer_scale = 0.5;
    bool use_vce = false;
    int vce_grid = 4;        // front-end pyramid is vce_grid x vce_grid
    vce::VceConfig vce_cfg;  // front-end configuration when use_vce
    std::uint64_t backbone_seed = 7777;

    // with the VCE front-end the content tokens are the enhanced grid cells
    int content_tokens() const { return use_vce ? vce_grid * vce_grid : seq_len - 1; }
    int tokens() const { return content_tokens() + 1; }
    int chunk_dim() const { return input_dim / (seq_len - 1); }
};

/// Transformer block with frozen weights; the query and value projections
/// carry optional adapter slots.
struct Block {
    FrozenLinear wq, wk, wv, wo;
    FrozenLinear mlp_in, mlp_out;  // d_ff x d, d x d_ff
    AdapterSlot q_adapter, v_adapter;
};

/// Collected skill-space activations per injected dual adapter, filled
/// during forward passes when requested.
struct EntropyCollector {
    // layer index -> flat activation values pooled over tokens and probes
    std::vector<std::vector<double>> skill;
    std::vector<std::vector<double>> rectified;
    void ensure(std::size_t layers) {
        if (skill.size() < layers) skill.resize(layers);
        if (rectified.size() < layers) rectified.resize(layers);
    }
};

/// Frozen-backbone toy transformer for the conflict benchmark. Only adapter
/// parameters, VCE parameters and the output head are ever trainable.
class ToyModel {
  public:
    ToyModel(const ToyModelConfig& cfg, std::uint64_t adapter_seed);

    /// Batched forward: one row of predictions per sample.
    TensorPtr forward(Tape& tape, const std::vector<Sample>& batch, bool training,
                      Rng* dropout_rng, EntropyCollector* collector = nullptr) const;

    /// Mean squared error over the batch on the tape.
    TensorPtr loss(Tape& tape, const TensorPtr& pred, const std::vector<Sample>& batch) const;

    std::vector<TensorPtr> stage1_trainable() const;  // head (+ vce)
    std::vector<TensorPtr> stage2_trainable() const;  // stage 1 + adapters
    std::vector<TensorPtr> adapter_params() const;
    std::vector<TensorPtr> backbone_params() const;   // frozen, for invariant checks

    std::size_t adapter_param_count() const;
    int injected_layer_count() const { return 2 * cfg_.n_blocks; }

    /// Mean gate liveness over the dual adapters (1.0 when not dual).
    double dual_gate_liveness(int probes, Rng& rng) const;

    const ToyModelConfig& config() const { return cfg_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::vector<Block>& blocks() { return blocks_; }
    const TensorPtr& head() const { return head_; }
    vce::VceParams* vce_params() { return vce_ ? &*vce_ : nullptr; }
    const vce::VceParams* vce_params() const { return vce_ ? &*vce_ : nullptr; }

    /// Short fit of the backbone (+ head) on conflict-free data; weights
    /// freeze again afterwards. This is the stand-in for the pretrained LLM.
    void pretrain_backbone(const Dataset& conflict_free, int steps, double lr, int batch,
                           std::uint64_t seed);
    /// Copy backbone weights from a donor with identical architecture, so one
    /// pretraining run serves every adapter variant.
    void adopt_backbone(const ToyModel& donor);

    /// Save/load the trainable state (adapters + head + vce).
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

  private:
    ToyModelConfig cfg_;
    TensorPtr task_embed_;      // n_tasks x d_model, frozen
    std::vector<TensorPtr> chunk_proj_;  // per content position, d_model x chunk_dim, frozen
    TensorPtr pos_embed_;       // seq_len x d_model, frozen
    std::vector<Block> blocks_;
    TensorPtr head_;            // output_dim x d_model, trainable
    std::optional<vce::VceParams> vce_;
    std::vector<TensorPtr> vce_level_proj_;  // per level, (G*G*C) x input_dim, frozen
    TensorPtr vce_token_proj_;               // d_model x C, frozen
    TensorPtr vce_pos_embed_;                // tokens x d_model, frozen

    TensorPtr embed_batch(Tape& tape, const std::vector<Sample>& batch) const;
    TensorPtr embed_batch_vce(Tape& tape, const std::vector<Sample>& batch) const;
    vce::FeaturePyramid pyramid_from_input(Tape& tape, const std::vector<double>& x) const;
    TensorPtr adapted_linear(Tape& tape, const FrozenLinear& w, const AdapterSlot& slot,
                             const TensorPtr& x_rows, bool training, Rng* dropout_rng,
                             EntropyCollector* collector, int layer_index) const;
};

AdapterSlot make_adapter(const AdapterChoice& choice, int d_model, std::uint64_t seed);

}  // namespace dla::conflictbench
