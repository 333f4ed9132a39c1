#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/adapters.hpp"
#include "dla/vce.hpp"

namespace dla::conflictbench {

// Inference-path forwards: no tape, no allocation inside the timed region.
// Scratch buffers are sized once per variant.
struct EvalScratch {
    std::vector<double> r1, r2, logits;
};

void lora_forward_eval(const adapters::FrozenLinear& w, const adapters::LoraParams& p,
                       const std::vector<double>& x, std::vector<double>& z, EvalScratch& s);
void dual_forward_eval(const adapters::FrozenLinear& w, const adapters::DualLoraParams& p,
                       const std::vector<double>& x, std::vector<double>& z, EvalScratch& s);
/// Top-k gating computes only the activated experts; dense and rectified
/// evaluate every expert with a nonzero gate.
void moe_forward_eval(const adapters::FrozenLinear& w, const adapters::MoeParams& p,
                      const std::vector<double>& x, std::vector<double>& z, EvalScratch& s);

/// Tape-free enhanced map; matches vce_forward's values.
numeric::Tensor vce_enhanced_eval(const vce::FeaturePyramid& pyr, const vce::VceParams& p,
                                  numeric::Tensor* heatmap = nullptr);

struct LatencyConfig {
    int d = 1024;
    int total_rank = 64;
    int reps = 1000;
    int warmup = 100;
    std::uint64_t seed = 123;
    double cv_limit = 0.10;  // reject runs noisier than this
    int bundle = 4;          // forwards per timing sample
    vce::VceConfig vce_cfg;  // used by the +vce variant
    int vce_grid = 8;
};

struct LatencyRow {
    std::string variant;
    double median_us = 0.0;
    double mean_us = 0.0;
    double stddev_us = 0.0;
    double cv = 0.0;
    double ratio = 0.0;  // median / lora median
    std::vector<double> samples_us;  // raw per-rep samples, persisted by the cli
};

struct LatencyReport {
    LatencyConfig cfg;
    std::vector<LatencyRow> rows;
    bool stable = true;

    const LatencyRow* find(const std::string& variant) const;
    nlohmann::json to_json(bool include_samples = false) const;
};

/// Measures single-token forward latency for the five standard variants
/// (lora, moe_top2, moe_softmax4, dual_lora, dual_lora_vce) at matched total
/// rank, single-threaded, identical input stream, median over reps.
LatencyReport latency_bench(const LatencyConfig& cfg);

}  // namespace dla::conflictbench
