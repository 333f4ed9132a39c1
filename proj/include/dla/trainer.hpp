#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/dataset.hpp"
#include "dla/toy_model.hpp"

namespace dla::conflictbench {

struct TrainConfig {
    int stage1_steps = 200;
    int stage2_steps = 1200;
    double lr = 0.05;
    int batch = 16;
    std::uint64_t seed = 1;
    int log_every = 50;
};

struct StepLog {
    int step = 0;            // global step across both stages
    int stage = 1;
    double train_loss = 0.0;
    double gate_liveness = 1.0;  // dual adapters only, 1.0 otherwise
};

struct MetricsReport {
    std::vector<StepLog> logs;
    std::vector<double> per_task_eval_loss;
    double total_eval_loss = 0.0;
    std::size_t adapter_params = 0;
    bool diverged = false;
    std::string diagnostic;  // set when diverged

    nlohmann::json to_json() const;
};

/// Two-stage fine-tuning: stage 1 updates the head (+ VCE when present) only,
/// stage 2 additionally updates the injected adapters. Plain SGD, fixed step
/// size, deterministic for a given config.
MetricsReport train(ToyModel& model, const TrainConfig& config, const Dataset& train_set,
                    const Dataset& eval_set);

/// Per-task mean loss on the split; no parameter mutation, no dropout.
std::vector<double> evaluate(const ToyModel& model, const Dataset& split);

double total_loss(const std::vector<double>& per_task);

}  // namespace dla::conflictbench
