#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dla::cli {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Identity of one run. The config hash is derived from the resolved config
/// bytes, so identical configs hash identically. Timestamps are recorded in
/// manifest.json only; data files embed the hash/seed/version header and
/// stay byte-reproducible.
struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::string subcommand;
    std::vector<std::string> artifacts;
    std::string timestamp_utc;  // excluded from data files and from the hash

    static RunManifest make(const std::string& subcommand, const std::string& resolved_config,
                            std::uint64_t seed);

    /// "# key = value" lines for CSV/JSONL headers (no timestamp).
    std::vector<std::string> header_lines(const std::string& resolved_config) const;
    nlohmann::json to_json() const;
    void write(const std::string& dir) const;  // <dir>/manifest.json
};

}  // namespace dla::cli
