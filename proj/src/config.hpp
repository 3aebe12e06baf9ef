#pragma once

// Flat `key = value` config files with `#` comments; every key can be
// overridden programmatically (the CLI maps --key value onto set()).

#include <map>
#include <string>

namespace car {

class Config {
public:
    void load_file(const std::string& path);
    void parse_line(const std::string& line);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace car
