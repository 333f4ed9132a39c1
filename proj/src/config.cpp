#include "dla/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dla::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

KvConfig KvConfig::parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw std::runtime_error("empty section name");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        if (section.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": key outside any [section]");
        cfg.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void KvConfig::set(const std::string& section, const std::string& key,
                   const std::string& value) {
    sections_[section][key] = value;
}

void KvConfig::apply_override(const std::string& section, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("override must be key=value: " + assignment);
    set(section, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KvConfig::merge_from(const KvConfig& other) {
    for (const auto& [sec, kv] : other.sections_)
        for (const auto& [k, v] : kv) sections_[sec][k] = v;
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

long KvConfig::get_int(const std::string& section, const std::string& key,
                       long fallback) const {
    if (!has(section, key)) return fallback;
    return std::stol(get(section, key, ""));
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
    if (!has(section, key)) return fallback;
    return std::stod(get(section, key, ""));
}

std::uint64_t KvConfig::get_u64(const std::string& section, const std::string& key,
                                std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return std::stoull(get(section, key, ""));
}

std::vector<std::string> KvConfig::get_list(const std::string& section, const std::string& key,
                                            const std::string& fallback) const {
    const std::string raw = get(section, key, fallback);
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

void KvConfig::validate(const std::string& section, const std::set<std::string>& known) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return;
    for (const auto& [k, v] : s->second) {
        if (known.count(k) == 0)
            throw std::runtime_error("unknown config key [" + section + "] " + k);
    }
}

std::string KvConfig::resolved_text() const {
    std::ostringstream out;
    for (const auto& [sec, kv] : sections_) {  // std::map keeps keys sorted
        out << "[" << sec << "]\n";
        for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
    }
    return out.str();
}

}  // namespace dla::cli
