#include "dla/adapter_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dla::adapters::io {

using nlohmann::json;
using numeric::TensorPtr;

static_assert(std::endian::native == std::endian::little,
              "serialized format is little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[8] = {'D', 'L', 'A', 'P', 'A', 'R', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i32(std::ofstream& out, std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::int32_t get_i32(std::ifstream& in) {
    std::int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

json shape_table(const std::vector<NamedTensor>& records) {
    json t = json::array();
    for (const auto& [name, tensor] : records) {
        t.push_back({{"name", name}, {"shape", tensor->shape}});
    }
    return t;
}

void write_sidecar(const std::string& path, const json& meta) {
    std::ofstream out(path + ".json");
    if (!out) throw std::runtime_error("cannot write " + path + ".json");
    out << meta.dump(2) << "\n";
}

json read_sidecar(const std::string& path) {
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("cannot read " + path + ".json");
    return json::parse(in);
}

TensorPtr find_tensor(const std::vector<NamedTensor>& records, const std::string& name) {
    for (const auto& [n, t] : records) {
        if (n == name) return t;
    }
    throw std::runtime_error("missing tensor record: " + name);
}

}  // namespace

void write_tensor_file(const std::string& path, AdapterKind kind,
                       const std::vector<NamedTensor>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, tensor] : records) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (int d : tensor->shape) put_i32(out, d);
        out.write(reinterpret_cast<const char*>(tensor->data.data()),
                  static_cast<std::streamsize>(tensor->data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<NamedTensor> read_tensor_file(const std::string& path, AdapterKind* kind_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path + ": bad magic");
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) throw std::runtime_error(path + ": unsupported version");
    const auto kind = static_cast<AdapterKind>(get_u32(in));
    if (kind_out) *kind_out = kind;
    const std::uint32_t count = get_u32(in);
    std::vector<NamedTensor> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t ndim = get_u32(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = get_i32(in);
        auto t = numeric::tensor(shape);
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(double)));
        if (!in) throw std::runtime_error(path + ": truncated tensor record");
        records.emplace_back(std::move(name), std::move(t));
    }
    return records;
}

AdapterKind peek_kind(const std::string& path) {
    AdapterKind k{};
    read_tensor_file(path, &k);
    return k;
}

void save(const std::string& path, const LoraParams& p) {
    std::vector<NamedTensor> records{{"A", p.A}, {"B", p.B}};
    write_tensor_file(path, AdapterKind::kLora, records);
    write_sidecar(path, json{{"kind", "lora"},
                             {"rank", p.rank},
                             {"alpha", p.alpha},
                             {"dropout", p.dropout},
                             {"scale", p.scale},
                             {"tensors", shape_table(records)}});
}

void save(const std::string& path, const DualLoraParams& p) {
    std::vector<NamedTensor> records{
        {"S", p.S}, {"T", p.T}, {"B", p.B}, {"norm_gain", p.norm_gain},
        {"norm_bias", p.norm_bias}};
    write_tensor_file(path, AdapterKind::kDualLora, records);
    write_sidecar(path, json{{"kind", "dual_lora"},
                             {"rank", p.rank},
                             {"alpha", p.alpha},
                             {"dropout", p.dropout},
                             {"scale", p.scale},
                             {"eps", p.eps},
                             {"tensors", shape_table(records)}});
}

void save(const std::string& path, const MoeParams& p) {
    std::vector<NamedTensor> records{{"router", p.router}};
    json ranks = json::array(), alphas = json::array();
    for (std::size_t e = 0; e < p.experts.size(); ++e) {
        records.emplace_back("expert" + std::to_string(e) + ".A", p.experts[e].A);
        records.emplace_back("expert" + std::to_string(e) + ".B", p.experts[e].B);
        ranks.push_back(p.experts[e].rank);
        alphas.push_back(p.experts[e].alpha);
    }
    write_tensor_file(path, AdapterKind::kMoe, records);
    write_sidecar(path, json{{"kind", "moe"},
                             {"strategy", moe_strategy_name(p.strategy)},
                             {"top_k", p.top_k},
                             {"ranks", ranks},
                             {"alphas", alphas},
                             {"dropout", p.experts.front().dropout},
                             {"tensors", shape_table(records)}});
}

LoraParams load_lora(const std::string& path) {
    AdapterKind kind{};
    auto records = read_tensor_file(path, &kind);
    if (kind != AdapterKind::kLora) throw std::runtime_error(path + ": not a lora file");
    const json meta = read_sidecar(path);
    LoraParams p;
    p.A = find_tensor(records, "A");
    p.B = find_tensor(records, "B");
    p.A->requires_grad = p.B->requires_grad = true;
    p.rank = meta.at("rank").get<int>();
    p.alpha = meta.at("alpha").get<double>();
    p.dropout = meta.at("dropout").get<double>();
    p.scale = meta.at("scale").get<double>();
    return p;
}

DualLoraParams load_dual_lora(const std::string& path) {
    AdapterKind kind{};
    auto records = read_tensor_file(path, &kind);
    if (kind != AdapterKind::kDualLora)
        throw std::runtime_error(path + ": not a dual_lora file");
    const json meta = read_sidecar(path);
    DualLoraParams p;
    p.S = find_tensor(records, "S");
    p.T = find_tensor(records, "T");
    p.B = find_tensor(records, "B");
    p.norm_gain = find_tensor(records, "norm_gain");
    p.norm_bias = find_tensor(records, "norm_bias");
    for (auto& t : {p.S, p.T, p.B, p.norm_gain, p.norm_bias}) t->requires_grad = true;
    p.rank = meta.at("rank").get<int>();
    p.alpha = meta.at("alpha").get<double>();
    p.dropout = meta.at("dropout").get<double>();
    p.scale = meta.at("scale").get<double>();
    p.eps = meta.at("eps").get<double>();
    return p;
}

MoeParams load_moe(const std::string& path) {
    AdapterKind kind{};
    auto records = read_tensor_file(path, &kind);
    if (kind != AdapterKind::kMoe) throw std::runtime_error(path + ": not a moe file");
    const json meta = read_sidecar(path);
    MoeParams p;
    p.router = find_tensor(records, "router");
    p.router->requires_grad = true;
    const std::string strategy = meta.at("strategy").get<std::string>();
    if (strategy == "topk") {
        p.strategy = MoeStrategy::kTopK;
    } else if (strategy == "softmax") {
        p.strategy = MoeStrategy::kSoftmaxDense;
    } else if (strategy == "rectified") {
        p.strategy = MoeStrategy::kRectified;
    } else {
        throw std::runtime_error(path + ": unknown strategy " + strategy);
    }
    p.top_k = meta.at("top_k").get<int>();
    const auto ranks = meta.at("ranks");
    const auto alphas = meta.at("alphas");
    const double dropout = meta.at("dropout").get<double>();
    for (std::size_t e = 0; e < ranks.size(); ++e) {
        LoraParams ex;
        ex.A = find_tensor(records, "expert" + std::to_string(e) + ".A");
        ex.B = find_tensor(records, "expert" + std::to_string(e) + ".B");
        ex.A->requires_grad = ex.B->requires_grad = true;
        ex.rank = ranks[e].get<int>();
        ex.alpha = alphas[e].get<double>();
        ex.dropout = dropout;
        ex.scale = static_cast<double>(ex.rank) / ex.alpha;
        p.experts.push_back(std::move(ex));
    }
    return p;
}

}  // namespace dla::adapters::io
