#include "dla/dataset.hpp"

#include <cmath>

#include "dla/rng.hpp"

namespace dla::conflictbench {

using numeric::Rng;

Tensor task_target_map(const SyntheticTaskSpec& spec, int task) {
    Rng rng(spec.map_seed);
    Tensor base({spec.output_dim, spec.input_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    numeric::fill_uniform(base, rng, -bound, bound);

    Tensor out({spec.output_dim, spec.input_dim});
    for (int i = 0; i < spec.output_dim; ++i) {
        // task-specific conflict direction: row-sign patterns, with task 1 the
        // full negation of task 0
        double sign;
        if (task == 0) {
            sign = 1.0;
        } else if (task == 1) {
            sign = -1.0;
        } else {
            sign = ((i >> (task - 2)) & 1) == 0 ? 1.0 : -1.0;
        }
        for (int j = 0; j < spec.input_dim; ++j) {
            const double conflicted = sign * base.at(i, j);
            out.at(i, j) = (1.0 - spec.conflict) * base.at(i, j) + spec.conflict * conflicted;
        }
    }
    return out;
}

Dataset generate_conflict_dataset(const SyntheticTaskSpec& spec, int n, std::uint64_t seed) {
    if (n < spec.n_tasks) throw numeric::ContractError("generate_conflict_dataset: n < tasks");
    Rng rng(seed);
    std::vector<Tensor> maps;
    maps.reserve(static_cast<std::size_t>(spec.n_tasks));
    for (int t = 0; t < spec.n_tasks; ++t) maps.push_back(task_target_map(spec, t));

    Dataset ds;
    ds.spec = spec;
    ds.samples.reserve(static_cast<std::size_t>(n));
    std::vector<double> shared_x(static_cast<std::size_t>(spec.input_dim));
    for (int i = 0; i < n; ++i) {
        const int task = i % spec.n_tasks;
        // two-task specs share each input across the task pair so conflicting
        // targets disagree on literally identical inputs
        const bool fresh_x = spec.n_tasks != 2 || task == 0;
        if (fresh_x) {
            for (double& v : shared_x) v = rng.uniform(-1.0, 1.0);
        }
        Sample s;
        s.task = task;
        s.x = shared_x;
        s.y.assign(static_cast<std::size_t>(spec.output_dim), 0.0);
        const Tensor& m = maps[static_cast<std::size_t>(task)];
        for (int r = 0; r < spec.output_dim; ++r) {
            double acc = 0.0;
            for (int c = 0; c < spec.input_dim; ++c) acc += m.at(r, c) * s.x[static_cast<std::size_t>(c)];
            s.y[static_cast<std::size_t>(r)] = acc;
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void split_dataset(const Dataset& all, int eval_every, Dataset* train, Dataset* eval) {
    train->spec = all.spec;
    eval->spec = all.spec;
    train->samples.clear();
    eval->samples.clear();
    for (int i = 0; i < all.size(); ++i) {
        // keep task pairs together so eval sees identical-input conflicts
        const int pair = i / all.spec.n_tasks;
        if ((pair + 1) % eval_every == 0) {
            eval->samples.push_back(all.samples[static_cast<std::size_t>(i)]);
        } else {
            train->samples.push_back(all.samples[static_cast<std::size_t>(i)]);
        }
    }
}

}  // namespace dla::conflictbench
