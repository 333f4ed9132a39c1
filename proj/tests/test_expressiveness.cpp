#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dla/expressiveness.hpp"
#include "oracles.hpp"

using namespace dla::expressiveness;
using dla::adapters::effective_update;
using dla::numeric::Rng;
using dla::numeric::Tensor;

namespace {

Tensor group_product(const LoraGroup& g) {
    const int d_out = g.B.dim(0), r = g.rank(), d_in = g.A.dim(1);
    Tensor m({d_out, d_in});
    for (int i = 0; i < d_out; ++i)
        for (int k = 0; k < r; ++k)
            for (int j = 0; j < d_in; ++j) m.at(i, j) += g.B.at(i, k) * g.A.at(k, j);
    return m;
}

double frob_diff(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("prop1: K rank-1 maps reconstruct exactly at rank K") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto rep = verify_prop1(3, 8, 8, seed);
        CHECK(rep.pass);
        CHECK(rep.error < 1e-10);
        CHECK(rep.rank_measured <= 3);
    }
    auto one = verify_prop1(1, 6, 6, 11);
    CHECK(one.pass);
}

TEST_CASE("prop1: collinear directions collapse the rank") {
    // all a_k identical -> the sum has rank 1 and even a rank-1 fit is exact
    auto gs = random_group_set({1, 1, 1}, 8, 8, 3);
    for (auto& g : gs.groups) g.A = gs.groups.front().A;
    Tensor delta({8, 8});
    for (const auto& g : gs.groups) {
        Tensor m = group_product(g);
        for (std::size_t i = 0; i < delta.size(); ++i) delta.data[i] += m.data[i];
    }
    CHECK(numerical_rank(delta) == 1);
}

TEST_CASE("cor1: grouped ranks reconstruct at the summed rank") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto a = verify_cor1({2, 2, 2, 2}, 16, 16, seed);
        CHECK(a.pass);
        CHECK(a.rank_measured <= 8);
        auto b = verify_cor1({4, 2, 1, 1}, 16, 16, seed);
        CHECK(b.pass);
        CHECK(b.rank_measured <= 8);
    }
    auto single = verify_cor1({3}, 8, 8, 9);
    CHECK(single.pass);
}

TEST_CASE("grouped dual reproduces every group map exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::vector<int> ranks;
        int budget = 4 + rng.below(4);
        int used = 0;
        while (used < budget) {
            const int r = 1 + rng.below(std::min(3, budget - used));
            ranks.push_back(r);
            used += r;
        }
        auto gs = random_group_set(ranks, 10, 7, seed * 31 + 1);
        auto gd = construct_grouped_dual(gs, budget);
        REQUIRE(gd.gates.size() == gs.groups.size());
        for (std::size_t k = 0; k < gs.groups.size(); ++k) {
            Tensor got = effective_update(gd.params, gd.gates[k]);
            Tensor want = group_product(gs.groups[k]);
            CHECK(frob_diff(got, want) < 1e-12);
        }
        // simultaneous gate equals the sum of the selected groups
        if (gs.groups.size() >= 2) {
            std::vector<double> both(gd.gates[0]);
            for (std::size_t i = 0; i < both.size(); ++i)
                both[i] = both[i] != 0.0 || gd.gates[1][i] != 0.0 ? 1.0 : 0.0;
            Tensor got = effective_update(gd.params, both);
            Tensor want = group_product(gs.groups[0]);
            Tensor w1 = group_product(gs.groups[1]);
            for (std::size_t i = 0; i < want.size(); ++i) want.data[i] += w1.data[i];
            CHECK(frob_diff(got, want) < 1e-12);
        }
        // empty gate is the zero map
        Tensor zero = effective_update(gd.params, std::vector<double>(budget, 0.0));
        for (double v : zero.data) CHECK(v == 0.0);
    }
}

TEST_CASE("grouped dual budget violation throws") {
    auto gs = random_group_set({3, 2}, 8, 8, 1);
    CHECK_THROWS_AS(construct_grouped_dual(gs, 4), dla::numeric::ContractError);
    // exact-budget single group: gate is all ones
    auto one = random_group_set({4}, 8, 8, 2);
    auto gd = construct_grouped_dual(one, 4);
    for (double g : gd.gates[0]) CHECK(g == 1.0);
    Tensor got = effective_update(gd.params, gd.gates[0]);
    CHECK(frob_diff(got, group_product(one.groups[0])) < 1e-12);
}

TEST_CASE("zero targets give zero error immediately") {
    std::vector<RoutedCluster> clusters(1);
    clusters[0].target_map = Tensor({2, 3});
    Rng rng(4);
    for (int i = 0; i < 16; ++i)
        clusters[0].inputs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0});
    FitOptions opt;
    opt.steps = 0;
    auto rep = fit_dual_to_routed_target(clusters, 2, 0, opt);
    CHECK(rep.error == 0.0);
    CHECK(rep.pass);
}

TEST_CASE("single cluster rank-1 target converges" * doctest::timeout(120)) {
    auto clusters = single_cluster_rank1(64, 17);
    FitOptions opt;
    opt.tolerance = 1e-4;
    auto rep = fit_dual_to_routed_target(clusters, 2, 17, opt);
    INFO("final mse ", rep.error);
    CHECK(rep.pass);
}

TEST_CASE("opposed clusters: dual fits, plain lora cannot" * doctest::timeout(300)) {
    std::vector<double> dual_mse, lora_mse;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto clusters = opposed_cluster_pair(64, seed);
        FitOptions dual_opt;
        auto dual = fit_dual_to_routed_target(clusters, 4, seed, dual_opt);
        FitOptions lora_opt = dual_opt;
        lora_opt.plain_lora = true;
        auto lora = fit_dual_to_routed_target(clusters, 4, seed, lora_opt);
        dual_mse.push_back(dual.error);
        lora_mse.push_back(lora.error);
        MESSAGE("seed ", seed, " dual ", dual.error, " lora ", lora.error);
    }
    int dual_hits = 0;
    for (double m : dual_mse) dual_hits += m < 1e-3 ? 1 : 0;
    CHECK(dual_hits >= 4);
    std::sort(dual_mse.begin(), dual_mse.end());
    std::sort(lora_mse.begin(), lora_mse.end());
    CHECK(lora_mse[2] >= 10.0 * dual_mse[2]);  // medians
}
