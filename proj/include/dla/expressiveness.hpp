#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/adapters.hpp"
#include "dla/tensor.hpp"

namespace dla::expressiveness {

using numeric::Tensor;

/// A set of factored low-rank maps {B_k A_k}, B_k: d_out x r_k, A_k: r_k x d_in.
struct LoraGroup {
    Tensor B;
    Tensor A;
    int rank() const { return A.dim(0); }
};

struct LoraGroupSet {
    std::vector<LoraGroup> groups;
    int total_rank() const {
        int r = 0;
        for (const auto& g : groups) r += g.rank();
        return r;
    }
};

struct VerificationReport {
    std::string statement;
    int d_in = 0;
    int d_out = 0;
    std::vector<int> ranks;    // per-group ranks (or {budget} for fits)
    int rank_budget = 0;
    int rank_measured = 0;     // numerical rank of the grouped sum
    double error = 0.0;        // Frobenius reconstruction error, or final MSE
    double tolerance = 0.0;
    bool pass = false;         // pass <=> error < tolerance
    std::uint64_t seed = 0;
    nlohmann::json details;

    nlohmann::json to_json() const;
};

/// Numerical rank: count of singular values above tol * sigma_max.
int numerical_rank(const Tensor& m, double tol = 1e-10);

/// Builds K random rank-1 products, sums them, fits a single rank-K map by
/// truncated SVD and reports the Frobenius reconstruction error.
VerificationReport verify_prop1(int k_count, int d_in, int d_out, std::uint64_t seed,
                                double tolerance = 1e-10);

/// Same with a grouped sum of the given ranks against a single map of rank
/// sum(ranks).
VerificationReport verify_cor1(const std::vector<int>& ranks, int d_in, int d_out,
                               std::uint64_t seed, double tolerance = 1e-10);

LoraGroupSet random_group_set(const std::vector<int>& ranks, int d_in, int d_out,
                              std::uint64_t seed);

/// Block-stacks the group factors into one dual adapter: rows of each A_k go
/// into S, columns of each B_k into B, with zero padding up to the budget.
/// gates[k] is the binary row mask selecting group k, and
/// effective_update(params, gates[k]) == B_k A_k exactly.
struct GroupedDual {
    adapters::DualLoraParams params;
    std::vector<std::vector<double>> gates;
};
GroupedDual construct_grouped_dual(const LoraGroupSet& gs, int budget_rank);

/// One routed regression task: every input in the cluster should map through
/// the same linear target. Inputs carry a trailing constant coordinate so the
/// gating projection can express affine cluster boundaries.
struct RoutedCluster {
    std::vector<std::vector<double>> inputs;  // each of length d_in
    Tensor target_map;                        // d_out x d_in
};

/// Two mirrored arcs with opposing targets (+x vs -x on the leading two
/// coordinates); linearly separable by the first coordinate's sign.
std::vector<RoutedCluster> opposed_cluster_pair(int per_cluster, std::uint64_t seed);
/// One cluster with a random rank-1 target.
std::vector<RoutedCluster> single_cluster_rank1(int samples, std::uint64_t seed);

struct FitOptions {
    int steps = 5000;
    double lr = 1.0;
    double tolerance = 1e-3;
    bool plain_lora = false;      // fit B(Ax) instead of the gated dual map
    double init_gate_scale = 1.0; // multiplier on the fan-in bound for T
    double init_gate_bias = 0.3;  // added to T's constant-coordinate weight
    int batch = 16;               // 0 = full batch
    int log_every = 0;            // 0 = silent
};

/// Trains the adapter branch (no frozen weight exists here) by full-batch
/// gradient descent to match each cluster's routed target; reports the final
/// mean squared error. Non-convergence shows up as pass=false, not a throw.
VerificationReport fit_dual_to_routed_target(const std::vector<RoutedCluster>& clusters,
                                             int budget_rank, std::uint64_t seed,
                                             const FitOptions& opt = {});

}  // namespace dla::expressiveness
