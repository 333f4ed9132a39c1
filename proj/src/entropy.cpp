#include "dla/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace dla::conflictbench {

using numeric::Tape;

nlohmann::json EntropyReport::to_json() const {
    nlohmann::json layers_j = nlohmann::json::array();
    for (const auto& l : layers) {
        layers_j.push_back(
            {{"layer", l.layer}, {"h_skill", l.h_skill}, {"h_rectified", l.h_rectified}});
    }
    return {{"layers", layers_j},
            {"mean_skill", mean_skill},
            {"mean_rectified", mean_rectified},
            {"bins", bins}};
}

double histogram_entropy(const std::vector<double>& values, int bins) {
    if (values.empty() || bins < 1) return 0.0;
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx == mn) return 0.0;  // single occupied bin
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    const double inv_width = bins / (mx - mn);
    for (double v : values) {
        int b = static_cast<int>((v - mn) * inv_width);
        if (b >= bins) b = bins - 1;  // max lands in the last bin
        counts[static_cast<std::size_t>(b)] += 1;
    }
    const double n = static_cast<double>(values.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

EntropyReport entropy_analysis(const ToyModel& model, const std::vector<Sample>& probes,
                               int bins) {
    if (probes.empty()) throw numeric::ContractError("entropy_analysis: empty probe set");
    EntropyCollector collector;
    collector.ensure(static_cast<std::size_t>(model.injected_layer_count()));
    const int chunk = 32;
    for (std::size_t start = 0; start < probes.size(); start += chunk) {
        const std::size_t end = std::min(probes.size(), start + chunk);
        std::vector<Sample> batch(probes.begin() + static_cast<std::ptrdiff_t>(start),
                                  probes.begin() + static_cast<std::ptrdiff_t>(end));
        Tape tape;
        model.forward(tape, batch, /*training=*/false, nullptr, &collector);
    }

    EntropyReport report;
    report.bins = bins;
    double sum_skill = 0.0, sum_rect = 0.0;
    int live_layers = 0;
    for (std::size_t l = 0; l < collector.skill.size(); ++l) {
        if (collector.skill[l].empty()) continue;  // layer carries no dual adapter
        LayerEntropy le;
        le.layer = static_cast<int>(l);
        le.h_skill = histogram_entropy(collector.skill[l], bins);
        le.h_rectified = histogram_entropy(collector.rectified[l], bins);
        sum_skill += le.h_skill;
        sum_rect += le.h_rectified;
        ++live_layers;
        report.layers.push_back(le);
    }
    if (live_layers > 0) {
        report.mean_skill = sum_skill / live_layers;
        report.mean_rectified = sum_rect / live_layers;
    }
    return report;
}

}  // namespace dla::conflictbench
