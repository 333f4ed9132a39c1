#include "dla/vce.hpp"

#include <cmath>

#include "dla/rng.hpp"

namespace dla::vce {

using numeric::tensor;

std::vector<TensorPtr> VceParams::trainable() const {
    std::vector<TensorPtr> out;
    for (const auto& t : value_proj) out.push_back(t);
    for (const auto& t : attn_proj) out.push_back(t);
    for (const auto& t : offset_proj) out.push_back(t);
    out.push_back(w_out);
    out.push_back(gamma);
    out.push_back(fuse_gain);
    out.push_back(fuse_bias);
    return out;
}

namespace {

VceParams make_params(const VceConfig& cfg, std::uint64_t seed, double proj_scale) {
    Rng rng(seed);
    VceParams p;
    p.cfg = cfg;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
    for (int l = 0; l < cfg.levels; ++l) {
        for (int m = 0; m < cfg.heads; ++m) {
            auto v = numeric::param({cfg.channels, cfg.channels});
            numeric::fill_uniform(*v, rng, -bound, bound);
            p.value_proj.push_back(v);
            auto a = numeric::param({cfg.points, cfg.channels});
            auto o = numeric::param({2 * cfg.points, cfg.channels});
            if (proj_scale != 0.0) {
                numeric::fill_uniform(*a, rng, -bound * proj_scale, bound * proj_scale);
                numeric::fill_uniform(*o, rng, -bound * proj_scale, bound * proj_scale);
            }
            p.attn_proj.push_back(a);
            p.offset_proj.push_back(o);
        }
    }
    p.w_out = numeric::param({cfg.channels, cfg.levels * cfg.channels});
    const double bound_o = 1.0 / std::sqrt(static_cast<double>(cfg.levels * cfg.channels));
    numeric::fill_uniform(*p.w_out, rng, -bound_o, bound_o);
    p.gamma = numeric::param({1});
    p.gamma->data[0] = cfg.gamma;
    p.fuse_gain = numeric::param({cfg.channels});
    std::fill(p.fuse_gain->data.begin(), p.fuse_gain->data.end(), 1.0);
    p.fuse_bias = numeric::param({cfg.channels});
    return p;
}

}  // namespace

VceParams init_vce(const VceConfig& cfg, std::uint64_t seed) {
    return make_params(cfg, seed, 0.0);
}

VceParams init_vce_random(const VceConfig& cfg, std::uint64_t seed, double proj_scale) {
    return make_params(cfg, seed, proj_scale);
}

std::size_t count_vce_params(const VceConfig& cfg) {
    const std::size_t c = static_cast<std::size_t>(cfg.channels);
    const std::size_t per_head = c * c                 // value projection
                                 + cfg.points * c      // attention logits
                                 + 2ull * cfg.points * c;  // offsets
    return static_cast<std::size_t>(cfg.levels) * cfg.heads * per_head +
           c * (static_cast<std::size_t>(cfg.levels) * c)  // W_o
           + 2ull * c                                      // fusion norm affine
           + 1ull;                                         // gamma
}

double vce_param_megabytes(const VceConfig& cfg) {
    return static_cast<double>(count_vce_params(cfg)) * sizeof(double) / (1024.0 * 1024.0);
}

TensorPtr deform_attn_level(Tape& tape, const TensorPtr& level_map, int row, int col,
                            const VceParams& p, int level) {
    const int k = p.cfg.points;
    auto anchor_pos = tensor({2}, {static_cast<double>(row), static_cast<double>(col)});
    auto feat = tape.bilinear_sample(level_map, anchor_pos);  // F_l(p_q), exact at integers

    TensorPtr out;
    for (int m = 0; m < p.cfg.heads; ++m) {
        auto logits = tape.matvec(p.ap(level, m), feat);        // [K]
        auto attn = tape.softmax(logits, 0);                    // sums to 1
        auto offsets = tape.matvec(p.op(level, m), feat);       // [2K], grid units
        TensorPtr head_sum;
        for (int kk = 0; kk < k; ++kk) {
            auto dp = tape.index_select(offsets, {2 * kk, 2 * kk + 1});
            auto pos = tape.add(anchor_pos, dp);
            auto sampled = tape.bilinear_sample(level_map, pos);  // clamps at borders
            auto weighted = tape.scalar_mul(sampled, tape.index_select(attn, {kk}));
            head_sum = head_sum ? tape.add(head_sum, weighted) : weighted;
        }
        auto projected = tape.matvec(p.vp(level, m), head_sum);
        out = out ? tape.add(out, projected) : projected;
    }
    return out;
}

TensorPtr aggregate_levels(Tape& tape, const std::vector<TensorPtr>& per_level,
                           const TensorPtr& w_out) {
    return tape.matvec(w_out, tape.concat(per_level));
}

TensorPtr fuse_residual(Tape& tape, const TensorPtr& anchor_vec, const TensorPtr& cue_vec,
                        const TensorPtr& gamma, const TensorPtr& gain, const TensorPtr& bias,
                        double eps) {
    auto mixed = tape.add(anchor_vec, tape.scalar_mul(cue_vec, gamma));
    return tape.layer_norm(mixed, gain, bias, eps);
}

PositionOut vce_position(Tape& tape, const FeaturePyramid& pyr, const VceParams& p, int row,
                         int col) {
    std::vector<TensorPtr> per_level;
    per_level.reserve(static_cast<std::size_t>(pyr.level_count()));
    for (int l = 0; l < pyr.level_count(); ++l) {
        per_level.push_back(
            deform_attn_level(tape, pyr.levels[static_cast<std::size_t>(l)], row, col, p, l));
    }
    auto cue = aggregate_levels(tape, per_level, p.w_out);
    auto anchor_pos = tensor({2}, {static_cast<double>(row), static_cast<double>(col)});
    auto anchor_vec = tape.bilinear_sample(pyr.anchor(), anchor_pos);
    auto fused = fuse_residual(tape, anchor_vec, cue, p.gamma, p.fuse_gain, p.fuse_bias,
                               p.cfg.eps);
    return {fused, cue};
}

CueHeatmap heatmap_from_positions(int h, int w, const std::vector<PositionOut>& positions) {
    CueHeatmap hm;
    hm.values = Tensor({h, w});
    double best = -1.0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto& cue = positions[static_cast<std::size_t>(r) * w + c].cue;
            double acc = 0.0;
            for (double v : cue->data) acc += v * v;
            const double norm = std::sqrt(acc);
            hm.values.at(r, c) = norm;
            if (norm > best) {
                best = norm;
                hm.argmax_row = r;
                hm.argmax_col = c;
            }
        }
    }
    return hm;
}

VceForwardOut vce_forward(Tape& tape, const FeaturePyramid& pyr, const VceParams& p) {
    if (pyr.level_count() < 1) throw numeric::ContractError("vce_forward: empty pyramid");
    if (pyr.level_count() != p.cfg.levels)
        throw numeric::ShapeError("vce_forward: pyramid level count differs from config");
    if (!pyr.finite()) throw numeric::ContractError("vce_forward: non-finite pyramid");
    const int h = pyr.height(), w = pyr.width(), c = pyr.channels();

    VceForwardOut out;
    out.positions.reserve(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int cc = 0; cc < w; ++cc) out.positions.push_back(vce_position(tape, pyr, p, r, cc));
    }
    out.enhanced = Tensor({h, w, c});
    for (int r = 0; r < h; ++r) {
        for (int cc = 0; cc < w; ++cc) {
            const auto& fused = out.positions[static_cast<std::size_t>(r) * w + cc].fused;
            for (int ch = 0; ch < c; ++ch) out.enhanced.at(r, cc, ch) = fused->data[ch];
        }
    }
    out.heatmap = heatmap_from_positions(h, w, out.positions);
    return out;
}

}  // namespace dla::vce
