#pragma once

#include <cstdint>
#include <vector>

#include "dla/tensor.hpp"

namespace dla::conflictbench {

using numeric::Tensor;

/// Declarative description of the synthetic multi-task regression problem.
/// conflict 0 gives every task the same target map; conflict 1 makes the
/// task targets negations of each other on shared inputs.
struct SyntheticTaskSpec {
    int n_tasks = 2;
    int input_dim = 60;
    int output_dim = 16;
    double conflict = 1.0;  // in [0, 1]
    std::uint64_t map_seed = 9000;  // seeds the family of target maps
};

struct Sample {
    int task = 0;
    std::vector<double> x;
    std::vector<double> y;
};

struct Dataset {
    SyntheticTaskSpec spec;
    std::vector<Sample> samples;

    int size() const { return static_cast<int>(samples.size()); }
};

/// The per-task target map: (1 - c) * M0 + c * C_t, where C_0 = M0 and
/// C_1 = -M0 (two-task case) and later tasks alternate row signs.
Tensor task_target_map(const SyntheticTaskSpec& spec, int task);

/// Deterministic dataset: inputs uniform in [-1, 1]^d, targets through the
/// task maps. With two tasks the samples come in pairs sharing the same
/// input so conflict-1 targets are y and -y on identical inputs.
Dataset generate_conflict_dataset(const SyntheticTaskSpec& spec, int n, std::uint64_t seed);

/// Deterministic train/eval split (eval takes every k-th sample).
void split_dataset(const Dataset& all, int eval_every, Dataset* train, Dataset* eval);

}  // namespace dla::conflictbench
