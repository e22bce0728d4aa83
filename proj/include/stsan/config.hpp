#pragma once

#include <map>
#include <string>
#include <vector>

#include "stsan/errors.hpp"

namespace stsan {

// Hierarchical key-value text: one `dotted.key = value` per line, `#`
// comments. Later sources (flags) override earlier ones (file, defaults);
// each key remembers where its value came from so the CLI can print an
// auditable banner.
class KvConfig {
public:
    static KvConfig from_file(const std::string& path, const std::string& source = "file");
    static KvConfig from_string(const std::string& text, const std::string& source);

    void set(const std::string& key, const std::string& value, const std::string& source);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;
    std::vector<std::string> get_strings(const std::string& key) const;  // empty if absent

    // Overlays `higher` on top of this config (higher wins).
    void merge_from(const KvConfig& higher);

    struct Entry {
        std::string key, value, source;
    };
    std::vector<Entry> entries() const;

private:
    struct Slot {
        std::string value, source;
    };
    std::map<std::string, Slot> values_;
};

}  // namespace stsan
