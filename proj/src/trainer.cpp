#include "dla/trainer.hpp"

#include <cmath>

namespace dla::conflictbench {

using numeric::Rng;
using numeric::Tape;
using numeric::TensorPtr;

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json logs_j = nlohmann::json::array();
    for (const auto& l : logs) {
        logs_j.push_back({{"step", l.step},
                          {"stage", l.stage},
                          {"train_loss", l.train_loss},
                          {"gate_liveness", l.gate_liveness}});
    }
    return {{"logs", logs_j},
            {"per_task_eval_loss", per_task_eval_loss},
            {"total_eval_loss", total_eval_loss},
            {"adapter_params", adapter_params},
            {"diverged", diverged},
            {"diagnostic", diagnostic}};
}

namespace {

std::vector<Sample> draw_batch(const Dataset& ds, int batch, Rng& rng) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i)
        out.push_back(ds.samples[static_cast<std::size_t>(rng.below(ds.size()))]);
    return out;
}

}  // namespace

MetricsReport train(ToyModel& model, const TrainConfig& config, const Dataset& train_set,
                    const Dataset& eval_set) {
    MetricsReport report;
    report.adapter_params = model.adapter_param_count();
    Rng batch_rng(config.seed);
    Rng dropout_rng(config.seed ^ 0xd80f00d5ULL);
    Rng liveness_rng(config.seed ^ 0x11feULL);

    const int total_steps = config.stage1_steps + config.stage2_steps;
    for (int step = 0; step < total_steps; ++step) {
        const int stage = step < config.stage1_steps ? 1 : 2;
        auto trainable = stage == 1 ? model.stage1_trainable() : model.stage2_trainable();
        auto batch = draw_batch(train_set, config.batch, batch_rng);

        Tape tape;
        auto pred = model.forward(tape, batch, /*training=*/true, &dropout_rng);
        auto loss = model.loss(tape, pred, batch);
        const double loss_v = loss->data[0];
        if (!std::isfinite(loss_v)) {
            report.diverged = true;
            report.diagnostic = "loss became non-finite at step " + std::to_string(step) +
                                " (stage " + std::to_string(stage) + ")";
            break;
        }
        for (auto& t : trainable) t->zero_grad();
        tape.backward(loss);
        for (auto& t : trainable) {
            if (t->grad.empty()) continue;
            for (std::size_t i = 0; i < t->size(); ++i) t->data[i] -= config.lr * t->grad[i];
        }

        if (config.log_every > 0 &&
            (step % config.log_every == 0 || step == total_steps - 1)) {
            StepLog log;
            log.step = step;
            log.stage = stage;
            log.train_loss = loss_v;
            log.gate_liveness = model.dual_gate_liveness(256, liveness_rng);
            report.logs.push_back(log);
        }
    }

    if (!report.diverged) {
        report.per_task_eval_loss = evaluate(model, eval_set);
        report.total_eval_loss = total_loss(report.per_task_eval_loss);
    }
    return report;
}

std::vector<double> evaluate(const ToyModel& model, const Dataset& split) {
    std::vector<double> loss_sum(static_cast<std::size_t>(split.spec.n_tasks), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(split.spec.n_tasks), 0);
    const int chunk = 32;
    for (int start = 0; start < split.size(); start += chunk) {
        const int end = std::min(split.size(), start + chunk);
        std::vector<Sample> batch(split.samples.begin() + start, split.samples.begin() + end);
        Tape tape;
        auto pred = model.forward(tape, batch, /*training=*/false, nullptr);
        for (std::size_t s = 0; s < batch.size(); ++s) {
            double acc = 0.0;
            for (int j = 0; j < model.config().output_dim; ++j) {
                const double d = pred->at(static_cast<int>(s), j) -
                                 batch[s].y[static_cast<std::size_t>(j)];
                acc += d * d;
            }
            loss_sum[static_cast<std::size_t>(batch[s].task)] +=
                acc / model.config().output_dim;
            counts[static_cast<std::size_t>(batch[s].task)] += 1;
        }
    }
    for (std::size_t t = 0; t < loss_sum.size(); ++t) {
        if (counts[t] > 0) loss_sum[t] /= counts[t];
    }
    return loss_sum;
}

double total_loss(const std::vector<double>& per_task) {
    double acc = 0.0;
    for (double v : per_task) acc += v;
    return per_task.empty() ? 0.0 : acc / static_cast<double>(per_task.size());
}

}  // namespace dla::conflictbench
