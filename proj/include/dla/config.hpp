#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dla::cli {

/// Flat key-value experiment configuration with one section per subcommand.
/// File syntax:
///
///     # comment
///     [bench]
///     reps = 2000
///     d = 1024
///
/// Command-line overrides arrive as "key=value" pairs for the active
/// section. Unknown keys are rejected against the per-section schema, and
/// the resolved (defaults + file + overrides) config is echoed into every
/// output so a run can be reproduced from its artifacts alone.
class KvConfig {
  public:
    KvConfig() = default;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_text(const std::string& text);

    void set(const std::string& section, const std::string& key, const std::string& value);
    void apply_override(const std::string& section, const std::string& assignment);
    void merge_from(const KvConfig& other);  // other wins

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    double get_double(const std::string& section, const std::string& key,
                      double fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                      const std::string& fallback) const;  // comma separated

    /// Throws std::runtime_error naming the first unknown key.
    void validate(const std::string& section, const std::set<std::string>& known) const;

    /// Canonical rendering (sorted sections and keys); the hashed bytes.
    std::string resolved_text() const;

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace dla::cli
