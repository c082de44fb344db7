#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcd/errors.hpp"

namespace dcd {

/// Resolved experiment configuration: plain key=value text. Defaults are
/// registered first, then a config file, then command-line overrides; later
/// sources win. The fully resolved map is snapshotted before any work so a
/// run can be reproduced from its snapshot alone.
class KvConfig {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    /// Applies every entry of `other` on top of this one. Unknown keys (not
    /// registered as defaults) raise ConfigError to catch typos early.
    void apply(const KvConfig& other, bool require_known);

    std::string get_str(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<size_t> get_size_list(const std::string& key) const;  // comma-separated

    static KvConfig from_file(const std::string& path);

    /// Sorted key=value lines.
    std::string to_string() const;
    void write(const std::string& path) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Output root for relative run directories: $DCD_OUTPUT_ROOT if set, else
/// "runs". The only environment override the tools honour.
std::string output_root();

/// Joins root and path unless path is absolute or explicitly relative (./..).
std::string resolve_out_dir(const std::string& path);

}  // namespace dcd
