#include "dla/expressiveness.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dla/rng.hpp"
#include "dla/tape.hpp"

namespace dla::expressiveness {

using numeric::Rng;
using numeric::Tape;
using numeric::TensorPtr;
using numeric::tensor;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (int i = 0; i < t.dim(0); ++i)
        for (int j = 0; j < t.dim(1); ++j) m(i, j) = t.at(i, j);
    return m;
}

double frobenius(const Eigen::MatrixXd& m) { return m.norm(); }

// best rank-r approximation via truncated SVD
Eigen::MatrixXd truncated_fit(const Eigen::MatrixXd& m, int r) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const int keep = std::min<int>(r, static_cast<int>(sv.size()));
    return svd.matrixU().leftCols(keep) * sv.head(keep).asDiagonal() *
           svd.matrixV().leftCols(keep).transpose();
}

int numerical_rank_eigen(const Eigen::MatrixXd& m, double tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol * std::max(sv(0), 1.0)) ++rank;
    }
    return rank;
}

}  // namespace

nlohmann::json VerificationReport::to_json() const {
    return nlohmann::json{{"statement", statement}, {"d_in", d_in},
                          {"d_out", d_out},         {"ranks", ranks},
                          {"rank_budget", rank_budget}, {"rank_measured", rank_measured},
                          {"error", error},         {"tolerance", tolerance},
                          {"pass", pass},           {"seed", seed},
                          {"details", details}};
}

int numerical_rank(const Tensor& m, double tol) { return numerical_rank_eigen(to_eigen(m), tol); }

LoraGroupSet random_group_set(const std::vector<int>& ranks, int d_in, int d_out,
                              std::uint64_t seed) {
    Rng rng(seed);
    LoraGroupSet gs;
    for (int r : ranks) {
        LoraGroup g{Tensor({d_out, r}), Tensor({r, d_in})};
        numeric::fill_uniform(g.B, rng, -1.0, 1.0);
        numeric::fill_uniform(g.A, rng, -1.0, 1.0);
        gs.groups.push_back(std::move(g));
    }
    return gs;
}

VerificationReport verify_prop1(int k_count, int d_in, int d_out, std::uint64_t seed,
                                double tolerance) {
    if (k_count > std::min(d_in, d_out))
        throw numeric::ContractError("verify_prop1: K exceeds min(d_in, d_out)");
    auto gs = random_group_set(std::vector<int>(k_count, 1), d_in, d_out, seed);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d_out, d_in);
    for (const auto& g : gs.groups) delta += to_eigen(g.B) * to_eigen(g.A);

    VerificationReport rep;
    rep.statement = "prop1";
    rep.d_in = d_in;
    rep.d_out = d_out;
    rep.ranks = std::vector<int>(k_count, 1);
    rep.rank_budget = k_count;
    rep.rank_measured = numerical_rank_eigen(delta, 1e-10);
    rep.error = frobenius(delta - truncated_fit(delta, k_count));
    rep.tolerance = tolerance;
    rep.pass = rep.error < tolerance;
    rep.seed = seed;
    return rep;
}

VerificationReport verify_cor1(const std::vector<int>& ranks, int d_in, int d_out,
                               std::uint64_t seed, double tolerance) {
    int budget = 0;
    for (int r : ranks) budget += r;
    if (budget > std::min(d_in, d_out))
        throw numeric::ContractError("verify_cor1: rank budget exceeds min(d_in, d_out)");
    auto gs = random_group_set(ranks, d_in, d_out, seed);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d_out, d_in);
    for (const auto& g : gs.groups) delta += to_eigen(g.B) * to_eigen(g.A);

    VerificationReport rep;
    rep.statement = "cor1";
    rep.d_in = d_in;
    rep.d_out = d_out;
    rep.ranks = ranks;
    rep.rank_budget = budget;
    rep.rank_measured = numerical_rank_eigen(delta, 1e-10);
    rep.error = frobenius(delta - truncated_fit(delta, budget));
    rep.tolerance = tolerance;
    rep.pass = rep.error < tolerance;
    rep.seed = seed;
    return rep;
}

GroupedDual construct_grouped_dual(const LoraGroupSet& gs, int budget_rank) {
    if (gs.groups.empty()) throw numeric::ContractError("construct_grouped_dual: empty set");
    const int d_out = gs.groups.front().B.dim(0);
    const int d_in = gs.groups.front().A.dim(1);
    if (gs.total_rank() > budget_rank)
        throw numeric::ContractError("construct_grouped_dual: rank budget violation");

    GroupedDual out;
    auto& p = out.params;
    p.S = numeric::param({budget_rank, d_in});
    p.T = numeric::param({budget_rank, d_in});  // unused by fixed gates, kept zero
    p.B = numeric::param({d_out, budget_rank});
    p.norm_gain = numeric::param({budget_rank});
    std::fill(p.norm_gain->data.begin(), p.norm_gain->data.end(), 1.0);
    p.norm_bias = numeric::param({budget_rank});
    p.rank = budget_rank;
    p.alpha = static_cast<double>(budget_rank);
    p.scale = 1.0;  // the grouped map is compared pre-scale

    int row = 0;
    for (const auto& g : gs.groups) {
        std::vector<double> gate(static_cast<std::size_t>(budget_rank), 0.0);
        for (int k = 0; k < g.rank(); ++k, ++row) {
            gate[static_cast<std::size_t>(row)] = 1.0;
            for (int j = 0; j < d_in; ++j) p.S->at(row, j) = g.A.at(k, j);
            for (int i = 0; i < d_out; ++i) p.B->at(i, row) = g.B.at(i, k);
        }
        out.gates.push_back(std::move(gate));
    }
    return out;
}

std::vector<RoutedCluster> opposed_cluster_pair(int per_cluster, std::uint64_t seed) {
    Rng rng(seed);
    // targets act on the two data coordinates; the third input coordinate is
    // the constant 1 used for affine gating
    Tensor plus({2, 3});
    plus.at(0, 0) = 1.0;
    plus.at(1, 1) = 1.0;
    Tensor minus({2, 3});
    minus.at(0, 0) = -1.0;
    minus.at(1, 1) = -1.0;

    std::vector<RoutedCluster> clusters(2);
    clusters[0].target_map = plus;
    clusters[1].target_map = minus;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            const double theta = rng.uniform(-M_PI / 4, M_PI / 4) + (c == 1 ? M_PI : 0.0);
            const double rho = rng.uniform(0.8, 1.2);
            clusters[static_cast<std::size_t>(c)].inputs.push_back(
                {rho * std::cos(theta), rho * std::sin(theta), 1.0});
        }
    }
    return clusters;
}

std::vector<RoutedCluster> single_cluster_rank1(int samples, std::uint64_t seed) {
    Rng rng(seed);
    Tensor target({2, 3});
    std::vector<double> b{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    std::vector<double> a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) target.at(i, j) = b[static_cast<std::size_t>(i)] *
                                                      a[static_cast<std::size_t>(j)];
    std::vector<RoutedCluster> clusters(1);
    clusters[0].target_map = target;
    for (int i = 0; i < samples; ++i) {
        const double theta = rng.uniform(-M_PI / 4, M_PI / 4);
        const double rho = rng.uniform(0.8, 1.2);
        clusters[0].inputs.push_back({rho * std::cos(theta), rho * std::sin(theta), 1.0});
    }
    return clusters;
}

VerificationReport fit_dual_to_routed_target(const std::vector<RoutedCluster>& clusters,
                                             int budget_rank, std::uint64_t seed,
                                             const FitOptions& opt) {
    if (clusters.empty()) throw numeric::ContractError("fit: no clusters");
    const int d_in = static_cast<int>(clusters.front().inputs.front().size());
    const int d_out = clusters.front().target_map.dim(0);
    int target_rank_sum = 0;
    for (const auto& c : clusters) target_rank_sum += numerical_rank(c.target_map, 1e-10);
    if (target_rank_sum > budget_rank)
        throw numeric::ContractError("fit: target rank sum exceeds budget");

    // flatten inputs and targets into row matrices
    int n = 0;
    for (const auto& c : clusters) n += static_cast<int>(c.inputs.size());
    auto x_rows = tensor({n, d_in});
    auto y_rows = tensor({n, d_out});
    {
        int row = 0;
        for (const auto& c : clusters) {
            for (const auto& x : c.inputs) {
                for (int j = 0; j < d_in; ++j) x_rows->at(row, j) = x[static_cast<std::size_t>(j)];
                for (int i = 0; i < d_out; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < d_in; ++j)
                        acc += c.target_map.at(i, j) * x[static_cast<std::size_t>(j)];
                    y_rows->at(row, i) = acc;
                }
                ++row;
            }
        }
    }

    auto p = adapters::init_dual_lora(d_in, d_out, budget_rank,
                                      2.0 * budget_rank, 0.0, seed);
    if (opt.init_gate_scale != 1.0) {
        for (double& v : p.T->data) v *= opt.init_gate_scale;
    }
    // A relu channel whose gate is negative on every sample receives no
    // gradient and can never revive. The trailing constant input coordinate
    // doubles as a gate bias: starting it positive keeps every rank channel
    // alive somewhere at init.
    if (!opt.plain_lora && opt.init_gate_bias > 0.0) {
        for (int k = 0; k < budget_rank; ++k)
            p.T->at(k, d_in - 1) = opt.init_gate_bias + std::fabs(p.T->at(k, d_in - 1));
    }
    auto lora = adapters::init_lora(d_in, d_out, budget_rank, 2.0 * budget_rank, 0.0, seed);
    std::vector<TensorPtr> trainable =
        opt.plain_lora ? std::vector<TensorPtr>{lora.A, lora.B}
                       : std::vector<TensorPtr>{p.S, p.T, p.B};

    auto forward_loss = [&](Tape& tape, const TensorPtr& xs, const TensorPtr& ys) {
        TensorPtr z;
        if (opt.plain_lora) {
            z = tape.scale(
                tape.matmul(tape.matmul(xs, tape.transpose(lora.A)), tape.transpose(lora.B)),
                lora.scale);
        } else {
            auto skill = tape.layer_norm(tape.matmul(xs, tape.transpose(p.S)), p.norm_gain,
                                         p.norm_bias, p.eps);
            auto gate = tape.relu(tape.matmul(xs, tape.transpose(p.T)));
            z = tape.scale(tape.matmul(tape.mul(skill, gate), tape.transpose(p.B)), p.scale);
        }
        auto diff = tape.sub(z, ys);
        const double inv = 1.0 / (static_cast<double>(xs->dim(0)) * d_out);
        return tape.scale(tape.sum(tape.mul(diff, diff)), inv);
    };

    Rng batch_rng(seed ^ 0x5eed5eedULL);
    const int batch = opt.batch > 0 ? std::min(opt.batch, n) : n;
    double mse = 0.0;
    bool diverged = false;
    for (int step = 0; step < opt.steps; ++step) {
        TensorPtr xs = x_rows, ys = y_rows;
        if (batch < n) {
            auto xb = tensor({batch, d_in});
            auto yb = tensor({batch, d_out});
            for (int i = 0; i < batch; ++i) {
                const int pick = batch_rng.below(n);
                for (int j = 0; j < d_in; ++j) xb->at(i, j) = x_rows->at(pick, j);
                for (int j = 0; j < d_out; ++j) yb->at(i, j) = y_rows->at(pick, j);
            }
            xs = xb;
            ys = yb;
        }
        Tape tape;
        auto loss = forward_loss(tape, xs, ys);
        if (!std::isfinite(loss->data[0])) {
            diverged = true;
            break;
        }
        for (auto& t : trainable) t->zero_grad();
        tape.backward(loss);
        for (auto& t : trainable) {
            for (std::size_t i = 0; i < t->size(); ++i) t->data[i] -= opt.lr * t->grad[i];
        }
        if (opt.log_every > 0 && step % opt.log_every == 0) {
            Tape eval;
            std::printf("step %5d mse %.6e\n", step,
                        forward_loss(eval, x_rows, y_rows)->data[0]);
        }
    }
    {
        Tape tape;
        mse = forward_loss(tape, x_rows, y_rows)->data[0];  // full-set error
        if (diverged && !std::isfinite(mse)) mse = std::numeric_limits<double>::infinity();
    }

    VerificationReport rep;
    rep.statement = opt.plain_lora ? "cor2_learned_lora" : "cor2_learned_dual";
    rep.d_in = d_in;
    rep.d_out = d_out;
    rep.ranks = {budget_rank};
    rep.rank_budget = budget_rank;
    rep.rank_measured = target_rank_sum;
    rep.error = mse;
    rep.tolerance = opt.tolerance;
    rep.pass = std::isfinite(mse) && mse < opt.tolerance;
    rep.seed = seed;
    rep.details = {{"steps", opt.steps}, {"lr", opt.lr}, {"samples", n}};
    return rep;
}

}  // namespace dla::expressiveness
