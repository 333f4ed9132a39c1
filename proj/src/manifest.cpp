#include "dla/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dla::cli {

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

RunManifest RunManifest::make(const std::string& subcommand,
                              const std::string& resolved_config, std::uint64_t seed) {
    RunManifest m;
    m.subcommand = subcommand;
    m.config_hash = hex64(fnv1a64(resolved_config));
    m.seed = seed;
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m.timestamp_utc = buf;
    return m;
}

std::vector<std::string> RunManifest::header_lines(const std::string& resolved_config) const {
    std::vector<std::string> lines;
    lines.push_back("# tool_version = " + tool_version);
    lines.push_back("# subcommand = " + subcommand);
    lines.push_back("# config_hash = " + config_hash);
    lines.push_back("# seed = " + std::to_string(seed));
    std::istringstream in(resolved_config);
    std::string line;
    while (std::getline(in, line)) lines.push_back("# config: " + line);
    return lines;
}

nlohmann::json RunManifest::to_json() const {
    return {{"config_hash", config_hash},   {"seed", seed},
            {"tool_version", tool_version}, {"subcommand", subcommand},
            {"artifacts", artifacts},       {"timestamp_utc", timestamp_utc}};
}

void RunManifest::write(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/manifest.json");
    out << to_json().dump(2) << "\n";
}

}  // namespace dla::cli
