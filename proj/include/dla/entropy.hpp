#pragma once

#include <vector>

#include <json.hpp>

#include "dla/toy_model.hpp"

namespace dla::conflictbench {

struct LayerEntropy {
    int layer = 0;          // injection order: block0.q, block0.v, block1.q, ...
    double h_skill = 0.0;      // entropy of pooled Norm(Sx) activations
    double h_rectified = 0.0;  // entropy of pooled Norm(Sx) . relu(Tx)
};

struct EntropyReport {
    std::vector<LayerEntropy> layers;
    double mean_skill = 0.0;
    double mean_rectified = 0.0;
    int bins = 64;

    nlohmann::json to_json() const;
};

/// Shannon entropy (nats) of a fixed-bin histogram over the observed
/// min..max range; zero-range data has a single occupied bin, entropy 0.
double histogram_entropy(const std::vector<double>& values, int bins);

/// Collects skill and rectified activations per injected dual layer over the
/// probe samples, then bins each pooled set.
EntropyReport entropy_analysis(const ToyModel& model, const std::vector<Sample>& probes,
                               int bins = 64);

}  // namespace dla::conflictbench
