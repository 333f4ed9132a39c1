#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dla/adapters.hpp"

namespace dla::adapters::io {

// Little-endian container: magic "DLAPARMS", u32 version, u32 kind,
// u32 record count, then per record a length-prefixed name, a u32 ndim,
// i32 dims and the raw f64 payload. A JSON sidecar at <path>.json carries
// the adapter configuration and the shape table.

enum class AdapterKind : std::uint32_t { kLora = 0, kDualLora = 1, kMoe = 2, kModel = 3 };

inline const char* adapter_kind_name(AdapterKind k) {
    switch (k) {
        case AdapterKind::kLora: return "lora";
        case AdapterKind::kDualLora: return "dual_lora";
        case AdapterKind::kMoe: return "moe";
        case AdapterKind::kModel: return "model";
    }
    return "?";
}

using NamedTensor = std::pair<std::string, numeric::TensorPtr>;

// low-level record io, reused by model checkpoints
void write_tensor_file(const std::string& path, AdapterKind kind,
                       const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_tensor_file(const std::string& path, AdapterKind* kind_out);

AdapterKind peek_kind(const std::string& path);

void save(const std::string& path, const LoraParams& p);
void save(const std::string& path, const DualLoraParams& p);
void save(const std::string& path, const MoeParams& p);

LoraParams load_lora(const std::string& path);
DualLoraParams load_dual_lora(const std::string& path);
MoeParams load_moe(const std::string& path);

}  // namespace dla::adapters::io
