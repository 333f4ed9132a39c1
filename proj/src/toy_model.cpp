#include "dla/toy_model.hpp"

#include <cmath>
#include <stdexcept>

#include "dla/adapter_io.hpp"
#include "dla/rng.hpp"

namespace dla::conflictbench {

using numeric::tensor;

AdapterKind adapter_kind_from_name(const std::string& name) {
    if (name == "none") return AdapterKind::kNone;
    if (name == "lora") return AdapterKind::kLora;
    if (name == "dual_lora" || name == "dual") return AdapterKind::kDualLora;
    if (name == "moe_top2" || name == "moe_topk" || name == "moe") return AdapterKind::kMoe;
    throw std::runtime_error("unknown adapter kind: " + name);
}

const char* adapter_kind_name(AdapterKind k) {
    switch (k) {
        case AdapterKind::kNone: return "none";
        case AdapterKind::kLora: return "lora";
        case AdapterKind::kDualLora: return "dual_lora";
        case AdapterKind::kMoe: return "moe";
    }
    return "?";
}

int AdapterChoice::total_rank() const {
    if (kind == AdapterKind::kMoe) {
        int r = 0;
        for (int e : moe_ranks) r += e;
        return r;
    }
    return rank;
}

AdapterSlot make_adapter(const AdapterChoice& choice, int d_model, std::uint64_t seed) {
    switch (choice.kind) {
        case AdapterKind::kNone:
            return std::monostate{};
        case AdapterKind::kLora:
            return adapters::init_lora(d_model, d_model, choice.rank,
                                       choice.alpha_factor * choice.rank, choice.dropout, seed);
        case AdapterKind::kDualLora:
            return adapters::init_dual_lora(d_model, d_model, choice.rank,
                                            choice.alpha_factor * choice.rank, choice.dropout,
                                            seed);
        case AdapterKind::kMoe:
            return adapters::init_moe(d_model, d_model, choice.moe_ranks, choice.strategy,
                                      choice.top_k, choice.dropout, seed, choice.alpha_factor);
    }
    return std::monostate{};
}

namespace {

TensorPtr frozen_matrix(int rows, int cols, Rng& rng) {
    auto t = tensor({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    numeric::fill_uniform(*t, rng, -bound, bound);
    return t;
}

std::vector<TensorPtr> slot_params(const AdapterSlot& slot) {
    if (const auto* l = std::get_if<LoraParams>(&slot)) return l->trainable();
    if (const auto* d = std::get_if<DualLoraParams>(&slot)) return d->trainable();
    if (const auto* m = std::get_if<MoeParams>(&slot)) return m->trainable();
    return {};
}

}  // namespace

ToyModel::ToyModel(const ToyModelConfig& cfg, std::uint64_t adapter_seed) : cfg_(cfg) {
    if (cfg.input_dim % (cfg.seq_len - 1) != 0)
        throw numeric::ContractError("toy model: input_dim must split across content tokens");
    Rng rng(cfg.backbone_seed);
    task_embed_ = frozen_matrix(cfg.n_tasks, cfg.d_model, rng);
    // segment-style task encoding: comparable scale to the content tokens so
    // gating projections can condition on it
    for (double& v : task_embed_->data) v *= 2.0;
    // distinct projection per content position: pooling then preserves every
    // input coordinate instead of collapsing chunks onto one subspace
    for (int t = 1; t < cfg.seq_len; ++t)
        chunk_proj_.push_back(frozen_matrix(cfg.d_model, cfg.chunk_dim(), rng));
    pos_embed_ = frozen_matrix(cfg.seq_len, cfg.d_model, rng);
    // strong positional vectors keep per-token statistics stable, which keeps
    // the block layer norms in a near-affine regime
    for (double& v : pos_embed_->data) v *= cfg.pos_scale;

    for (int b = 0; b < cfg.n_blocks; ++b) {
        Block blk;
        blk.wq = adapters::FrozenLinear{frozen_matrix(cfg.d_model, cfg.d_model, rng)};
        blk.wk = adapters::FrozenLinear{frozen_matrix(cfg.d_model, cfg.d_model, rng)};
        blk.wv = adapters::FrozenLinear{frozen_matrix(cfg.d_model, cfg.d_model, rng)};
        blk.wo = adapters::FrozenLinear{frozen_matrix(cfg.d_model, cfg.d_model, rng)};
        blk.mlp_in = adapters::FrozenLinear{frozen_matrix(cfg.d_ff, cfg.d_model, rng)};
        blk.mlp_out = adapters::FrozenLinear{frozen_matrix(cfg.d_model, cfg.d_ff, rng)};
        blk.q_adapter = make_adapter(cfg.adapter, cfg.d_model, adapter_seed + 2 * b);
        blk.v_adapter = make_adapter(cfg.adapter, cfg.d_model, adapter_seed + 2 * b + 1);
        blocks_.push_back(std::move(blk));
    }

    head_ = numeric::param({cfg.output_dim, cfg.d_model});
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        numeric::fill_uniform(*head_, rng, -bound, bound);
    }

    if (cfg.use_vce) {
        vce_ = vce::init_vce(cfg.vce_cfg, adapter_seed + 101);
        const int flat = cfg.vce_grid * cfg.vce_grid * cfg.vce_cfg.channels;
        for (int l = 0; l < cfg.vce_cfg.levels; ++l) {
            // frozen projections build each pyramid level from the raw input
            vce_level_proj_.push_back(frozen_matrix(flat, cfg.input_dim, rng));
        }
        // content tokens enter through the enhanced grid cells
        vce_token_proj_ = frozen_matrix(cfg.d_model, cfg.vce_cfg.channels, rng);
        vce_pos_embed_ = frozen_matrix(cfg.tokens(), cfg.d_model, rng);
    }
}

vce::FeaturePyramid ToyModel::pyramid_from_input(Tape& tape,
                                                 const std::vector<double>& x) const {
    (void)tape;
    const int g = cfg_.vce_grid, ch = cfg_.vce_cfg.channels;
    vce::FeaturePyramid pyr;
    for (int l = 0; l < cfg_.vce_cfg.levels; ++l) {
        auto level = tensor({g, g, ch});
        const auto& proj = vce_level_proj_[static_cast<std::size_t>(l)];
        for (int cell = 0; cell < g * g * ch; ++cell) {
            double acc = 0.0;
            for (int j = 0; j < cfg_.input_dim; ++j)
                acc += proj->at(cell, j) * x[static_cast<std::size_t>(j)];
            level->data[static_cast<std::size_t>(cell)] = acc;
        }
        pyr.levels.push_back(level);
    }
    return pyr;
}

TensorPtr ToyModel::embed_batch_vce(Tape& tape, const std::vector<Sample>& batch) const {
    const int g = cfg_.vce_grid, d = cfg_.d_model;
    std::vector<TensorPtr> rows;
    rows.reserve(batch.size() * static_cast<std::size_t>(cfg_.tokens()));
    for (const Sample& smp : batch) {
        auto task_tok = tensor({d});
        for (int j = 0; j < d; ++j)
            task_tok->data[static_cast<std::size_t>(j)] =
                task_embed_->at(smp.task, j) + vce_pos_embed_->at(0, j);
        rows.push_back(task_tok);
        auto pyr = pyramid_from_input(tape, smp.x);
        for (int r = 0; r < g; ++r) {
            for (int cc = 0; cc < g; ++cc) {
                auto out = vce::vce_position(tape, pyr, *vce_, r, cc);
                const int tok = 1 + r * g + cc;
                auto pos = tensor({d});
                for (int j = 0; j < d; ++j)
                    pos->data[static_cast<std::size_t>(j)] =
                        vce_pos_embed_->at(tok, j) + task_embed_->at(smp.task, j);
                rows.push_back(tape.add(tape.matvec(vce_token_proj_, out.fused), pos));
            }
        }
    }
    return tape.vstack(rows);
}

TensorPtr ToyModel::embed_batch(Tape& tape, const std::vector<Sample>& batch) const {
    (void)tape;
    const int seq = cfg_.seq_len, d = cfg_.d_model, chunk = cfg_.chunk_dim();
    auto rows = tensor({static_cast<int>(batch.size()) * seq, d});
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Sample& smp = batch[s];
        // task token
        for (int j = 0; j < d; ++j)
            rows->at(static_cast<int>(s) * seq, j) =
                task_embed_->at(smp.task, j) + pos_embed_->at(0, j);
        // content tokens from input chunks; every token carries the task
        // encoding so adapters can condition on it directly
        for (int t = 1; t < seq; ++t) {
            const int off = (t - 1) * chunk;
            const auto& proj = chunk_proj_[static_cast<std::size_t>(t - 1)];
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int cdim = 0; cdim < chunk; ++cdim)
                    acc += proj->at(j, cdim) * smp.x[static_cast<std::size_t>(off + cdim)];
                rows->at(static_cast<int>(s) * seq + t, j) =
                    acc + pos_embed_->at(t, j) + task_embed_->at(smp.task, j);
            }
        }
    }
    return rows;
}

TensorPtr ToyModel::adapted_linear(Tape& tape, const FrozenLinear& w, const AdapterSlot& slot,
                                   const TensorPtr& x_rows, bool training, Rng* dropout_rng,
                                   EntropyCollector* collector, int layer_index) const {
    Rng* rng = training ? dropout_rng : nullptr;
    if (const auto* l = std::get_if<LoraParams>(&slot))
        return adapters::lora_forward_batch(tape, w, *l, x_rows, rng);
    if (const auto* dlp = std::get_if<DualLoraParams>(&slot)) {
        adapters::DualBatchTrace trace;
        auto out = adapters::dual_lora_forward_batch(tape, w, *dlp, x_rows, rng,
                                                     collector ? &trace : nullptr);
        if (collector) {
            collector->ensure(static_cast<std::size_t>(injected_layer_count()));
            auto& sk = collector->skill[static_cast<std::size_t>(layer_index)];
            auto& rc = collector->rectified[static_cast<std::size_t>(layer_index)];
            sk.insert(sk.end(), trace.skill_norm->data.begin(), trace.skill_norm->data.end());
            rc.insert(rc.end(), trace.gated->data.begin(), trace.gated->data.end());
        }
        return out;
    }
    if (const auto* m = std::get_if<MoeParams>(&slot))
        return adapters::moe_forward_batch(tape, w, *m, x_rows, rng);
    return tape.matmul(x_rows, tape.transpose(w.W));
}

TensorPtr ToyModel::forward(Tape& tape, const std::vector<Sample>& batch, bool training,
                            Rng* dropout_rng, EntropyCollector* collector) const {
    const int seq = cfg_.tokens(), d = cfg_.d_model;
    const int n = static_cast<int>(batch.size());
    TensorPtr x = cfg_.use_vce ? embed_batch_vce(tape, batch) : embed_batch(tape, batch);

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(d));
    int layer_index = 0;
    for (const Block& blk : blocks_) {
        auto q = adapted_linear(tape, blk.wq, blk.q_adapter, x, training, dropout_rng, collector,
                                layer_index++);
        auto k = tape.matmul(x, tape.transpose(blk.wk.W));
        auto v = adapted_linear(tape, blk.wv, blk.v_adapter, x, training, dropout_rng, collector,
                                layer_index++);
        // per-sample attention over full (non-causal) windows
        std::vector<TensorPtr> attended;
        attended.reserve(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) {
            auto qs = tape.rows(q, s * seq, (s + 1) * seq);
            auto ks = tape.rows(k, s * seq, (s + 1) * seq);
            auto vs = tape.rows(v, s * seq, (s + 1) * seq);
            auto scores = tape.scale(tape.matmul(qs, tape.transpose(ks)), attn_scale);
            auto probs = tape.softmax(scores, 1);
            attended.push_back(tape.matmul(probs, vs));
        }
        auto attn_out = tape.matmul(tape.vstack(attended), tape.transpose(blk.wo.W));
        x = tape.add(x, tape.scale(attn_out, cfg_.sublayer_scale));
        auto hidden = tape.relu(tape.matmul(x, tape.transpose(blk.mlp_in.W)));
        auto mlp_out = tape.matmul(hidden, tape.transpose(blk.mlp_out.W));
        x = tape.add(x, tape.scale(mlp_out, cfg_.sublayer_scale));
    }

    // mean-pool each sample's tokens, then the trainable head
    std::vector<TensorPtr> pooled;
    pooled.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s)
        pooled.push_back(tape.scale(tape.col_sum(tape.rows(x, s * seq, (s + 1) * seq)),
                                    1.0 / seq));
    return tape.matmul(tape.vstack(pooled), tape.transpose(head_));
}

TensorPtr ToyModel::loss(Tape& tape, const TensorPtr& pred,
                         const std::vector<Sample>& batch) const {
    auto target = tensor({static_cast<int>(batch.size()), cfg_.output_dim});
    for (std::size_t s = 0; s < batch.size(); ++s)
        for (int j = 0; j < cfg_.output_dim; ++j) target->at(static_cast<int>(s), j) =
            batch[s].y[static_cast<std::size_t>(j)];
    auto diff = tape.sub(pred, target);
    const double inv = 1.0 / (static_cast<double>(batch.size()) * cfg_.output_dim);
    return tape.scale(tape.sum(tape.mul(diff, diff)), inv);
}

std::vector<TensorPtr> ToyModel::stage1_trainable() const {
    std::vector<TensorPtr> out{head_};
    if (vce_) {
        auto v = vce_->trainable();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

std::vector<TensorPtr> ToyModel::stage2_trainable() const {
    auto out = stage1_trainable();
    auto a = adapter_params();
    out.insert(out.end(), a.begin(), a.end());
    return out;
}

std::vector<TensorPtr> ToyModel::adapter_params() const {
    std::vector<TensorPtr> out;
    for (const Block& blk : blocks_) {
        for (const auto* slot : {&blk.q_adapter, &blk.v_adapter}) {
            auto p = slot_params(*slot);
            out.insert(out.end(), p.begin(), p.end());
        }
    }
    return out;
}

std::vector<TensorPtr> ToyModel::backbone_params() const {
    std::vector<TensorPtr> out{task_embed_, pos_embed_};
    out.insert(out.end(), chunk_proj_.begin(), chunk_proj_.end());
    out.insert(out.end(), vce_level_proj_.begin(), vce_level_proj_.end());
    if (vce_token_proj_) out.push_back(vce_token_proj_);
    if (vce_pos_embed_) out.push_back(vce_pos_embed_);
    for (const Block& blk : blocks_) {
        out.push_back(blk.wq.W);
        out.push_back(blk.wk.W);
        out.push_back(blk.wv.W);
        out.push_back(blk.wo.W);
        out.push_back(blk.mlp_in.W);
        out.push_back(blk.mlp_out.W);
    }
    return out;
}

std::size_t ToyModel::adapter_param_count() const {
    std::size_t total = 0;
    for (const Block& blk : blocks_) {
        for (const auto* slot : {&blk.q_adapter, &blk.v_adapter}) {
            if (const auto* l = std::get_if<LoraParams>(slot))
                total += adapters::param_count(*l, cfg_.d_model, cfg_.d_model);
            if (const auto* d = std::get_if<DualLoraParams>(slot))
                total += adapters::param_count(*d, cfg_.d_model, cfg_.d_model);
            if (const auto* m = std::get_if<MoeParams>(slot))
                total += adapters::param_count(*m, cfg_.d_model, cfg_.d_model);
        }
    }
    return total;
}

double ToyModel::dual_gate_liveness(int probes, Rng& rng) const {
    double acc = 0.0;
    int count = 0;
    for (const Block& blk : blocks_) {
        for (const auto* slot : {&blk.q_adapter, &blk.v_adapter}) {
            if (const auto* d = std::get_if<DualLoraParams>(slot)) {
                acc += adapters::gate_liveness(*d, probes, rng);
                ++count;
            }
        }
    }
    return count == 0 ? 1.0 : acc / count;
}

void ToyModel::pretrain_backbone(const Dataset& conflict_free, int steps, double lr, int batch,
                                 std::uint64_t seed) {
    auto backbone = backbone_params();
    std::vector<TensorPtr> trainable = backbone;
    trainable.push_back(head_);
    for (auto& t : backbone) t->requires_grad = true;
    Rng rng(seed);
    for (int step = 0; step < steps; ++step) {
        std::vector<Sample> batch_samples;
        batch_samples.reserve(static_cast<std::size_t>(batch));
        for (int i = 0; i < batch; ++i)
            batch_samples.push_back(
                conflict_free.samples[static_cast<std::size_t>(rng.below(conflict_free.size()))]);
        Tape tape;
        auto pred = forward(tape, batch_samples, /*training=*/false, nullptr);
        auto l = loss(tape, pred, batch_samples);
        if (!l->finite()) break;
        for (auto& t : trainable) t->zero_grad();
        tape.backward(l);
        for (auto& t : trainable) {
            if (t->grad.empty()) continue;
            for (std::size_t i = 0; i < t->size(); ++i) t->data[i] -= lr * t->grad[i];
        }
    }
    for (auto& t : backbone) {
        t->requires_grad = false;  // frozen from here on
        t->grad.clear();
    }
}

void ToyModel::adopt_backbone(const ToyModel& donor) {
    auto mine = backbone_params();
    auto theirs = donor.backbone_params();
    if (mine.size() != theirs.size())
        throw numeric::ContractError("adopt_backbone: architecture mismatch");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i]->shape != theirs[i]->shape)
            throw numeric::ContractError("adopt_backbone: shape mismatch");
        mine[i]->data = theirs[i]->data;
    }
    head_->data = donor.head_->data;
}

void ToyModel::save_checkpoint(const std::string& path) const {
    namespace io = adapters::io;
    std::vector<io::NamedTensor> records{{"head", head_}};
    int bi = 0;
    for (const Block& blk : blocks_) {
        for (const auto* slot : {&blk.q_adapter, &blk.v_adapter}) {
            const std::string prefix =
                "block" + std::to_string(bi / 2) + (bi % 2 == 0 ? ".q." : ".v.");
            if (const auto* l = std::get_if<LoraParams>(slot)) {
                records.emplace_back(prefix + "A", l->A);
                records.emplace_back(prefix + "B", l->B);
            } else if (const auto* d = std::get_if<DualLoraParams>(slot)) {
                records.emplace_back(prefix + "S", d->S);
                records.emplace_back(prefix + "T", d->T);
                records.emplace_back(prefix + "B", d->B);
                records.emplace_back(prefix + "norm_gain", d->norm_gain);
                records.emplace_back(prefix + "norm_bias", d->norm_bias);
            } else if (const auto* m = std::get_if<MoeParams>(slot)) {
                records.emplace_back(prefix + "router", m->router);
                for (std::size_t e = 0; e < m->experts.size(); ++e) {
                    records.emplace_back(prefix + "expert" + std::to_string(e) + ".A",
                                         m->experts[e].A);
                    records.emplace_back(prefix + "expert" + std::to_string(e) + ".B",
                                         m->experts[e].B);
                }
            }
            ++bi;
        }
    }
    if (vce_) {
        auto v = vce_->trainable();
        for (std::size_t i = 0; i < v.size(); ++i)
            records.emplace_back("vce." + std::to_string(i), v[i]);
    }
    io::write_tensor_file(path, io::AdapterKind::kModel, records);
}

void ToyModel::load_checkpoint(const std::string& path) {
    namespace io = adapters::io;
    io::AdapterKind kind{};
    auto records = io::read_tensor_file(path, &kind);
    if (kind != io::AdapterKind::kModel)
        throw std::runtime_error(path + ": not a model checkpoint");
    auto take = [&](const std::string& name, const TensorPtr& dst) {
        for (const auto& [n, t] : records) {
            if (n == name) {
                if (t->shape != dst->shape)
                    throw std::runtime_error(path + ": shape mismatch for " + name);
                dst->data = t->data;
                return;
            }
        }
        throw std::runtime_error(path + ": missing record " + name);
    };
    take("head", head_);
    int bi = 0;
    for (Block& blk : blocks_) {
        for (auto* slot : {&blk.q_adapter, &blk.v_adapter}) {
            const std::string prefix =
                "block" + std::to_string(bi / 2) + (bi % 2 == 0 ? ".q." : ".v.");
            if (auto* l = std::get_if<LoraParams>(slot)) {
                take(prefix + "A", l->A);
                take(prefix + "B", l->B);
            } else if (auto* d = std::get_if<DualLoraParams>(slot)) {
                take(prefix + "S", d->S);
                take(prefix + "T", d->T);
                take(prefix + "B", d->B);
                take(prefix + "norm_gain", d->norm_gain);
                take(prefix + "norm_bias", d->norm_bias);
            } else if (auto* m = std::get_if<MoeParams>(slot)) {
                take(prefix + "router", m->router);
                for (std::size_t e = 0; e < m->experts.size(); ++e) {
                    take(prefix + "expert" + std::to_string(e) + ".A", m->experts[e].A);
                    take(prefix + "expert" + std::to_string(e) + ".B", m->experts[e].B);
                }
            }
            ++bi;
        }
    }
    if (vce_) {
        auto v = vce_->trainable();
        for (std::size_t i = 0; i < v.size(); ++i) take("vce." + std::to_string(i), v[i]);
    }
}

}  // namespace dla::conflictbench
