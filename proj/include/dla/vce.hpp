#pragma once

#include <cstdint>
#include <vector>

#include "dla/tape.hpp"
#include "dla/tensor.hpp"

namespace dla::vce {

using numeric::Rng;
using numeric::Tape;
using numeric::Tensor;
using numeric::TensorPtr;

/// L feature maps of identical H x W x C plus the index of the anchor level
/// F* that gets enhanced.
struct FeaturePyramid {
    std::vector<TensorPtr> levels;  // each H x W x C
    int anchor_index = 0;

    int level_count() const { return static_cast<int>(levels.size()); }
    int height() const { return levels.front()->dim(0); }
    int width() const { return levels.front()->dim(1); }
    int channels() const { return levels.front()->dim(2); }
    const TensorPtr& anchor() const { return levels[static_cast<std::size_t>(anchor_index)]; }
    bool finite() const {
        for (const auto& l : levels) {
            if (!l->finite()) return false;
        }
        return true;
    }
};

struct VceConfig {
    int levels = 4;   // L
    int heads = 2;    // M
    int points = 4;   // K reference patches per head
    int channels = 32;
    double gamma = 1.0;  // residual fusion scale
    double eps = 1e-5;
};

/// Per level l and head m: a C x C value projection, a K x C attention-logit
/// projection and a 2K x C offset projection (bias-free). Levels aggregate
/// through W_o: (L C) -> C, then fuse residually under a layer norm.
struct VceParams {
    VceConfig cfg;
    std::vector<TensorPtr> value_proj;   // L*M entries, C x C
    std::vector<TensorPtr> attn_proj;    // L*M entries, K x C
    std::vector<TensorPtr> offset_proj;  // L*M entries, 2K x C
    TensorPtr w_out;                     // C x (L*C)
    TensorPtr gamma;                     // [1], trainable fusion scale
    TensorPtr fuse_gain;                 // C
    TensorPtr fuse_bias;                 // C

    const TensorPtr& vp(int l, int m) const { return value_proj[idx(l, m)]; }
    const TensorPtr& ap(int l, int m) const { return attn_proj[idx(l, m)]; }
    const TensorPtr& op(int l, int m) const { return offset_proj[idx(l, m)]; }
    std::size_t idx(int l, int m) const {
        return static_cast<std::size_t>(l) * cfg.heads + m;
    }
    std::vector<TensorPtr> trainable() const;
};

/// Offset and attention projections start at zero so the module begins as
/// uniform attention pinned to the anchor position; value projections and
/// W_o get fan-in random values.
VceParams init_vce(const VceConfig& cfg, std::uint64_t seed);
/// Same but with random offset/attention projections (gradient checks need
/// fractional sampling positions).
VceParams init_vce_random(const VceConfig& cfg, std::uint64_t seed, double proj_scale = 0.5);

std::size_t count_vce_params(const VceConfig& cfg);
double vce_param_megabytes(const VceConfig& cfg);  // at f64 precision

/// Deformable attention at one grid position of one level: K sampled patches
/// per head, softmax attention over K, summed over heads (Eq. style:
/// sum_m sum_k A(k) W_m F(p + dp(k))).
TensorPtr deform_attn_level(Tape& tape, const TensorPtr& level_map, int row, int col,
                            const VceParams& p, int level);

/// Concatenate per-level local features and project to C.
TensorPtr aggregate_levels(Tape& tape, const std::vector<TensorPtr>& per_level,
                           const TensorPtr& w_out);

/// Per-position layer norm over channels of F* + gamma * F'.
TensorPtr fuse_residual(Tape& tape, const TensorPtr& anchor_vec, const TensorPtr& cue_vec,
                        const TensorPtr& gamma, const TensorPtr& gain, const TensorPtr& bias,
                        double eps);

/// Full forward at one anchor position; exposes the aggregated cue so the
/// heatmap can be formed.
struct PositionOut {
    TensorPtr fused;  // [C]
    TensorPtr cue;    // [C], pre-fusion aggregated local feature
};
PositionOut vce_position(Tape& tape, const FeaturePyramid& pyr, const VceParams& p, int row,
                         int col);

/// H x W map of per-position l2 norms of the cue F'.
struct CueHeatmap {
    Tensor values;  // H x W, all entries >= 0
    int argmax_row = 0;
    int argmax_col = 0;
};

struct VceForwardOut {
    Tensor enhanced;                     // H x W x C
    CueHeatmap heatmap;
    std::vector<PositionOut> positions;  // row-major, on the tape for training
};

VceForwardOut vce_forward(Tape& tape, const FeaturePyramid& pyr, const VceParams& p);

CueHeatmap heatmap_from_positions(int h, int w, const std::vector<PositionOut>& positions);

}  // namespace dla::vce
