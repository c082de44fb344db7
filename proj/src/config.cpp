#include "dcd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dcd {

void KvConfig::apply(const KvConfig& other, bool require_known) {
    for (const auto& [k, v] : other.values_) {
        if (require_known && values_.count(k) == 0) {
            throw ConfigError("unknown config key '" + k + "'");
        }
        values_[k] = v;
    }
}

std::string KvConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

int64_t KvConfig::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

uint64_t KvConfig::get_u64(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an unsigned integer");
    }
}

double KvConfig::get_double(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
}

bool KvConfig::get_bool(const std::string& key) const {
    const std::string v = get_str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<size_t> KvConfig::get_size_list(const std::string& key) const {
    const std::string v = get_str(key);
    std::vector<size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t pos = 0;
            long val = std::stol(item, &pos);
            if (pos != item.size() || val <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<size_t>(val));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + item + "' is not a positive integer");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    KvConfig cfg;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                              line + "'");
        }
        cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

std::string KvConfig::to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

void KvConfig::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config snapshot: " + path);
    out << to_string();
    if (!out) throw IoError("short write: " + path);
}

std::string output_root() {
    const char* env = std::getenv("DCD_OUTPUT_ROOT");
    return env != nullptr && env[0] != '\0' ? std::string(env) : std::string("runs");
}

std::string resolve_out_dir(const std::string& path) {
    if (path.empty()) return path;
    if (path[0] == '/' || path[0] == '.') return path;
    return output_root() + "/" + path;
}

}  // namespace dcd
